"""JIT kernels for the Poisson-clock grand coupling of corner-flip dynamics.

A clock is identified by ``(type, site i, height l)``: type 0 is a rate-p clock
that flips a local maximum at ``(i, l)`` down, type 1 a rate-q clock that flips
a local minimum up. Only clocks that can act on some tracked chain matter, so
the kernel keeps the set of such pairs, deduplicated across chains, with a
reference count per pair. Each step draws one exponential for the whole set,
picks a pair proportionally to its rate and flips it in every chain that has
that exact corner.

Pair keys are ``i * (N + 1) + (l + i) // 2``; a corner at site ``i`` has
``|l| <= i`` and ``l = i mod 2`` so keys are dense in ``[0, N * (N + 1))``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .rng import exponential, uniform


@nb.njit(cache=True)
def new_workspace(n_chains, N):
    size = N * (N + 1)
    cap = n_chains * (N - 1) + 1
    ref = np.zeros((2, size), dtype=np.int32)
    pos = np.full((2, size), -1, dtype=np.int32)
    lst = np.zeros((2, cap), dtype=np.int32)
    cnt = np.zeros(2, dtype=np.int64)
    return ref, pos, lst, cnt


@nb.njit(cache=True, inline="always")
def _corner_type(hc, j):
    """0 for a local max at j, 1 for a local min, -1 otherwise."""
    a = hc[j - 1]
    c = hc[j + 1]
    if a != c:
        return -1
    if a < hc[j]:
        return 0
    return 1


@nb.njit(cache=True)
def _add_corner(hc, j, N, ref, pos, lst, cnt):
    ty = _corner_type(hc, j)
    if ty < 0:
        return
    key = j * (N + 1) + (hc[j] + j) // 2
    ref[ty, key] += 1
    if ref[ty, key] == 1:
        n = cnt[ty]
        lst[ty, n] = key
        pos[ty, key] = n
        cnt[ty] = n + 1


@nb.njit(cache=True)
def _remove_corner(hc, j, N, ref, pos, lst, cnt):
    ty = _corner_type(hc, j)
    if ty < 0:
        return
    key = j * (N + 1) + (hc[j] + j) // 2
    ref[ty, key] -= 1
    if ref[ty, key] == 0:
        n = cnt[ty] - 1
        at = pos[ty, key]
        last = lst[ty, n]
        lst[ty, at] = last
        pos[ty, last] = at
        pos[ty, key] = -1
        cnt[ty] = n


@nb.njit(cache=True)
def _clear(ref, pos, lst, cnt):
    for ty in range(2):
        for m in range(cnt[ty]):
            key = lst[ty, m]
            ref[ty, key] = 0
            pos[ty, key] = -1
        cnt[ty] = 0


@nb.njit(cache=True)
def evolve(h, p, state, t0, t_end, stop_on_merge, max_events, ws):
    """Run the coupled chains ``h`` (shape ``(C, N+1)``, modified in place).

    Stops at ``t_end``, after ``max_events`` flips (if > 0), or, when
    ``stop_on_merge`` is set, as soon as all chains coincide.
    Returns ``(time, n_events, merged)``.
    """
    ref, pos, lst, cnt = ws
    C = h.shape[0]
    N = h.shape[1] - 1
    q = 1.0 - p
    for c in range(C):
        for j in range(1, N):
            _add_corner(h[c], j, N, ref, pos, lst, cnt)
    ndiff = 0
    if stop_on_merge:
        for c in range(1, C):
            for x in range(1, N):
                if h[c, x] != h[0, x]:
                    ndiff += 1
        if ndiff == 0:
            _clear(ref, pos, lst, cnt)
            return t0, 0, True
    t = t0
    events = 0
    merged = False
    while True:
        rmax = p * cnt[0]
        total = rmax + q * cnt[1]
        dt = exponential(state, total)
        if t + dt > t_end:
            t = t_end
            break
        t += dt
        u = uniform(state) * total
        if u < rmax:
            ty = 0
            m = int(u / p)
        else:
            ty = 1
            m = int((u - rmax) / q)
        if m >= cnt[ty]:
            m = cnt[ty] - 1
        key = lst[ty, m]
        i = key // (N + 1)
        l = 2 * (key % (N + 1)) - i
        step = -2 if ty == 0 else 2
        for c in range(C):
            hc = h[c]
            if hc[i] != l or _corner_type(hc, i) != ty:
                continue
            if stop_on_merge and c > 0:
                ndiff -= hc[i] != h[0, i]
            for j in range(max(1, i - 1), min(N - 1, i + 1) + 1):
                _remove_corner(hc, j, N, ref, pos, lst, cnt)
            hc[i] += step
            for j in range(max(1, i - 1), min(N - 1, i + 1) + 1):
                _add_corner(hc, j, N, ref, pos, lst, cnt)
            if stop_on_merge and c > 0:
                ndiff += hc[i] != h[0, i]
            elif stop_on_merge:
                # chain 0 moved: recount site i against every other chain
                for c2 in range(1, C):
                    ndiff -= h[c2, i] != l
                    ndiff += h[c2, i] != hc[i]
        events += 1
        if stop_on_merge and ndiff == 0:
            merged = True
            break
        if max_events > 0 and events >= max_events:
            break
    _clear(ref, pos, lst, cnt)
    return t, events, merged


@nb.njit(cache=True, parallel=True)
def record_ensemble(init, p, keys, times):
    """Evolve ``R`` independent replicas and snapshot them at ``times``.

    ``init`` has shape ``(R, C, N+1)``; returns heights ``(R, T, C, N+1)``
    (int32) and event counts ``(R,)``.
    """
    R, C, Np1 = init.shape
    T = times.shape[0]
    out = np.empty((R, T, C, Np1), dtype=np.int32)
    events = np.zeros(R, dtype=np.int64)
    for r in nb.prange(R):
        h = init[r].astype(np.int64)
        state = np.empty(1, dtype=np.uint64)
        state[0] = keys[r]
        ws = new_workspace(C, Np1 - 1)
        t = 0.0
        for j in range(T):
            t, ev, _ = evolve(h, p, state, t, times[j], False, 0, ws)
            events[r] += ev
            out[r, j] = h
    return out, events


@nb.njit(cache=True, parallel=True)
def merge_ensemble(init, p, keys, t_max):
    """First time all chains coincide, per replica; ``inf`` if beyond ``t_max``."""
    R, C, Np1 = init.shape
    taus = np.empty(R, dtype=np.float64)
    for r in nb.prange(R):
        h = init[r].astype(np.int64)
        state = np.empty(1, dtype=np.uint64)
        state[0] = keys[r]
        ws = new_workspace(C, Np1 - 1)
        t, _, merged = evolve(h, p, state, 0.0, t_max, True, 0, ws)
        taus[r] = t if merged else np.inf
    return taus
