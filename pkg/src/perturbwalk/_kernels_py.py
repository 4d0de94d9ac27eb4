"""Pure numpy backend.

Steps all trajectories of a chunk in lockstep.  Results are bit-identical to
the compiled backend: the jump atom is chosen with integer arithmetic only and
the rare power-tail magnitudes go through the same scalar float expression.
"""
from __future__ import annotations

import numpy as np

from .lattice import MAX_MAGNITUDE, hurwitz_tail
from .rng import COUNTERS_PER_STEP, draw, draw_array, uniform53

BACKEND = "python"

_LOW32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)


def tail_magnitude(beta: float, k0p1: int, s0: float, v: float) -> int:
    lo = k0p1
    hi = 2 * lo
    while hurwitz_tail(beta, float(hi)) / s0 >= v:
        lo = hi
        if hi >= MAX_MAGNITUDE:
            return MAX_MAGNITUDE
        hi = 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hurwitz_tail(beta, float(mid)) / s0 >= v:
            lo = mid
        else:
            hi = mid
    return lo


def _tail_jump(p, law: int, key: int, step: int) -> np.ndarray:
    d = p["d"]
    v = uniform53(draw(key, COUNTERS_PER_STEP * step + 1))
    mag = tail_magnitude(float(p["tail_beta"][law]), int(p["tail_k0p1"][law]), float(p["tail_s0"][law]), v)
    c = ((draw(key, COUNTERS_PER_STEP * step + 2) >> 32) * (2 * d)) >> 32
    out = np.zeros(d, dtype=np.int64)
    out[c >> 1] = mag if (c & 1) == 0 else -mag
    return out


def _sample(p, law_idx: np.ndarray | int, keys: np.ndarray, step: int) -> np.ndarray:
    t = len(keys)
    d = p["d"]
    u = draw_array(keys, COUNTERS_PER_STEP * step)
    out = np.empty((t, d), dtype=np.int64)
    law_idx = np.broadcast_to(np.asarray(law_idx, dtype=np.int64), (t,))
    offsets = p["offsets"]
    for law in np.unique(law_idx):
        sel = np.nonzero(law_idx == law)[0]
        off = int(offsets[law])
        m = np.uint64(offsets[law + 1] - off)
        us = u[sel]
        j = (((us >> _SH32) * m) >> _SH32).astype(np.int64) + off
        keep = (us & _LOW32) < p["thr"][j]
        j = np.where(keep, j, p["alias"][j] + off)
        out[sel] = p["jumps"][j]
        ta = int(p["tail_atom"][law])
        if ta >= 0:
            for r in sel[j == ta + off]:
                out[r] = _tail_jump(p, int(law), int(keys[r]), step)
    return out


def _law_at(p, x: np.ndarray, in_box: np.ndarray) -> np.ndarray:
    n_box = p["n_box"]
    law = np.zeros(len(x), dtype=np.int64)
    if not in_box.any() or not p["site_law"].any():
        return law
    side = 2 * n_box + 1
    rows = np.nonzero(in_box)[0]
    flat = np.zeros(len(rows), dtype=np.int64)
    for axis in range(p["d"]):
        flat += (x[rows, axis] + n_box) * side**axis
    law[rows] = p["site_law"][flat]
    return law


def run_summary(p, keys, start, horizon, checkpoints, nubar_cap):
    keys = np.asarray(keys, dtype=np.uint64)
    t = len(keys)
    d = p["d"]
    n_box = p["n_box"]
    x = np.tile(np.asarray(start, dtype=np.int64), (t, 1))
    nrm = np.abs(x).max(axis=1)
    in_k = nrm <= n_box
    start_in = bool(in_k[0]) if t else False
    rho = in_k.astype(np.int64)
    nu = in_k.astype(np.int64)
    outside = (~in_k).astype(np.int64)
    tau = np.full(t, -1, dtype=np.int64)
    first_hit = np.full(t, -1, dtype=np.int64)
    first_ret = np.full(t, -1, dtype=np.int64)
    max_norm = nrm.copy()
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    cps = np.zeros((t, len(checkpoints), d), dtype=np.int64)
    ci = 0
    while ci < len(checkpoints) and checkpoints[ci] == 0:
        cps[:, ci] = x
        ci += 1
    for i in range(horizon):
        law = _law_at(p, x, in_k)
        x += _sample(p, law, keys, i)
        k = i + 1
        nrm = np.abs(x).max(axis=1)
        now_in = nrm <= n_box
        rho += now_in
        nu += now_in & ~in_k
        outside += ~now_in
        first_hit[(first_hit < 0) & now_in] = k
        if start_in:
            tau[(tau < 0) & ~now_in] = k
        first_ret[(first_ret < 0) & (nrm == 0)] = k
        np.maximum(max_norm, nrm, out=max_norm)
        in_k = now_in
        while ci < len(checkpoints) and checkpoints[ci] == k:
            cps[:, ci] = x
            ci += 1
    endpoint = x.copy()
    nubar = np.full(t, -1, dtype=np.int64)
    if nubar_cap >= 0:
        nubar[:] = nu
        zeros = outside.copy()
        active = zeros < horizon + 1
        step = horizon
        xa, ia = x.copy(), in_k.copy()
        while active.any() and step < horizon + nubar_cap:
            rows = np.nonzero(active)[0]
            law = _law_at(p, xa[rows], ia[rows])
            xa[rows] += _sample(p, law, keys[rows], step)
            now_in = np.abs(xa[rows]).max(axis=1) <= n_box
            zeros[rows] += ~now_in
            nubar[rows] += now_in & ~ia[rows]
            ia[rows] = now_in
            active[rows] = zeros[rows] < horizon + 1
            step += 1
        nubar[active] = -1
    return {
        "endpoint": endpoint,
        "rho": rho,
        "nu": nu,
        "outside": outside,
        "nubar": nubar,
        "tau": tau,
        "first_hit": first_hit,
        "first_return": first_ret,
        "max_norm": max_norm,
        "checkpoints": cps,
    }


def run_coupled(p, keys_x, keys_z, start, horizon):
    keys_x = np.asarray(keys_x, dtype=np.uint64)
    keys_z = np.asarray(keys_z, dtype=np.uint64)
    t = len(keys_x)
    n_box = p["n_box"]
    x = np.tile(np.asarray(start, dtype=np.int64), (t, 1))
    z = x.copy()
    in_k = np.abs(x).max(axis=1) <= n_box
    rho = in_k.astype(np.int64)
    sup = np.zeros(t, dtype=np.int64)
    triangle = np.zeros(t, dtype=np.int64)
    norms: list[list[int]] = [[] for _ in range(t)]
    for i in range(horizon):
        law = _law_at(p, x, in_k)
        jx = _sample(p, law, keys_x, i)
        jz = jx.copy()
        rows = np.nonzero(in_k)[0]
        if len(rows):
            jz[rows] = _sample(p, 0, keys_z[rows], i)
            nx = np.abs(jx[rows]).max(axis=1)
            triangle[rows] += nx + np.abs(jz[rows]).max(axis=1)
            for r, v in zip(rows.tolist(), nx.tolist()):
                norms[r].append(v)
        x += jx
        z += jz
        np.maximum(sup, np.abs(x - z).max(axis=1), out=sup)
        in_k = np.abs(x).max(axis=1) <= n_box
        rho += in_k
    counts = np.array([len(v) for v in norms], dtype=np.int64)
    flat = np.array([v for row in norms for v in row], dtype=np.int64)
    return {
        "x_endpoint": x,
        "z_endpoint": z,
        "sup_distance": sup,
        "rho": rho,
        "triangle": triangle,
        "jump_norms": flat,
        "jump_counts": counts,
    }


def run_path(p, key, start, horizon):
    keys = np.array([key], dtype=np.uint64)
    x = np.asarray(start, dtype=np.int64).reshape(1, -1).copy()
    path = np.empty((horizon + 1, p["d"]), dtype=np.int64)
    path[0] = x[0]
    n_box = p["n_box"]
    for i in range(horizon):
        in_k = np.abs(x).max(axis=1) <= n_box
        x += _sample(p, _law_at(p, x, in_k), keys, i)
        path[i + 1] = x[0]
    return path
