# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled stepping kernels.

Same contract and bit-for-bit the same output as ``_kernels_py``; any change
to the draw layout or the tail expression must be mirrored there.
"""
import numpy as np

from libc.math cimport pow
from libc.stdint cimport int32_t, int64_t, uint64_t
from libcpp.vector cimport vector

BACKEND = "cython"

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t LOW32 = 0xFFFFFFFFULL
cdef int64_t MAX_MAGNITUDE = 1LL << 53


cdef struct Laws:
    int d
    int64_t n_box
    int64_t side
    const int32_t* site_law
    const int64_t* offsets
    const uint64_t* thr
    const int64_t* alias
    const int64_t* jumps
    const int64_t* tail_atom
    const double* tail_beta
    const int64_t* tail_k0p1
    const double* tail_s0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline uint64_t draw(uint64_t key, uint64_t ctr) noexcept nogil:
    return mix64(key + (ctr + 1) * GAMMA)


cdef inline double hurwitz_tail(double b, double x) noexcept nogil:
    return (pow(x, 1.0 - b) / (b - 1.0)
            + 0.5 * pow(x, -b)
            + b / 12.0 * pow(x, -b - 1.0)
            - b * (b + 1.0) * (b + 2.0) / 720.0 * pow(x, -b - 3.0)
            + b * (b + 1.0) * (b + 2.0) * (b + 3.0) * (b + 4.0) / 30240.0 * pow(x, -b - 5.0))


cdef int64_t tail_magnitude(double beta, int64_t k0p1, double s0, double v) noexcept nogil:
    cdef int64_t lo = k0p1
    cdef int64_t hi = 2 * lo
    cdef int64_t mid
    while hurwitz_tail(beta, <double>hi) / s0 >= v:
        lo = hi
        if hi >= MAX_MAGNITUDE:
            return MAX_MAGNITUDE
        hi = 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hurwitz_tail(beta, <double>mid) / s0 >= v:
            lo = mid
        else:
            hi = mid
    return lo


cdef void tail_jump(const Laws* L, int64_t law, uint64_t key, int64_t step, int64_t* out) noexcept nogil:
    cdef double v = (<double>(draw(key, <uint64_t>(3 * step + 1)) >> 11) + 0.5) * (1.0 / 9007199254740992.0)
    cdef int64_t mag = tail_magnitude(L.tail_beta[law], L.tail_k0p1[law], L.tail_s0[law], v)
    cdef uint64_t c = ((draw(key, <uint64_t>(3 * step + 2)) >> 32) * <uint64_t>(2 * L.d)) >> 32
    cdef int a
    for a in range(L.d):
        out[a] = 0
    out[c >> 1] = mag if (c & 1) == 0 else -mag


cdef inline void sample_jump(const Laws* L, int64_t law, uint64_t key, int64_t step, int64_t* out) noexcept nogil:
    cdef uint64_t u = draw(key, <uint64_t>(3 * step))
    cdef int64_t off = L.offsets[law]
    cdef uint64_t m = <uint64_t>(L.offsets[law + 1] - off)
    cdef int64_t j = <int64_t>(((u >> 32) * m) >> 32)
    cdef const int64_t* src
    cdef int a
    if (u & LOW32) >= L.thr[off + j]:
        j = L.alias[off + j]
    if j == L.tail_atom[law]:
        tail_jump(L, law, key, step, out)
        return
    src = L.jumps + (off + j) * L.d
    if L.d == 2:
        out[0] = src[0]
        out[1] = src[1]
    else:
        for a in range(L.d):
            out[a] = src[a]


cdef inline int64_t norm(const int64_t* x, int d) noexcept nogil:
    cdef int64_t best = 0
    cdef int64_t v
    cdef int64_t w
    cdef int a
    if d == 2:
        v = x[0] if x[0] >= 0 else -x[0]
        w = x[1] if x[1] >= 0 else -x[1]
        return v if v > w else w
    for a in range(d):
        v = x[a] if x[a] >= 0 else -x[a]
        if v > best:
            best = v
    return best


cdef inline int64_t law_at(const Laws* L, const int64_t* x, bint inside) noexcept nogil:
    cdef int64_t flat = 0
    cdef int64_t scale = 1
    cdef int a
    if not inside:
        return 0
    for a in range(L.d):
        flat += (x[a] + L.n_box) * scale
        scale *= L.side
    return L.site_law[flat]


cdef Laws make_laws(int d, int64_t n_box, const int32_t[::1] site_law, const int64_t[::1] offsets,
                    const uint64_t[::1] thr, const int64_t[::1] alias, const int64_t[:, ::1] jumps,
                    const int64_t[::1] tail_atom, const double[::1] tail_beta,
                    const int64_t[::1] tail_k0p1, const double[::1] tail_s0):
    cdef Laws L
    L.d = d
    L.n_box = n_box
    L.side = 2 * n_box + 1
    L.site_law = &site_law[0]
    L.offsets = &offsets[0]
    L.thr = &thr[0]
    L.alias = &alias[0]
    L.jumps = &jumps[0, 0]
    L.tail_atom = &tail_atom[0]
    L.tail_beta = &tail_beta[0]
    L.tail_k0p1 = &tail_k0p1[0]
    L.tail_s0 = &tail_s0[0]
    return L


cdef Laws _laws_from(p):
    return make_laws(p["d"], p["n_box"], p["site_law"], p["offsets"], p["thr"], p["alias"], p["jumps"],
                     p["tail_atom"], p["tail_beta"], p["tail_k0p1"], p["tail_s0"])


def run_summary(p, keys, start, int64_t horizon, checkpoints, int64_t nubar_cap):
    cdef Laws L = _laws_from(p)
    cdef const uint64_t[::1] kv = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t t = kv.shape[0]
    cdef int d = L.d
    cdef const int64_t[::1] st = np.ascontiguousarray(start, dtype=np.int64)
    cdef const int64_t[::1] cp = np.ascontiguousarray(checkpoints, dtype=np.int64)
    cdef Py_ssize_t ncp = cp.shape[0]

    endpoint_a = np.zeros((t, d), dtype=np.int64)
    rho_a = np.zeros(t, dtype=np.int64)
    nu_a = np.zeros(t, dtype=np.int64)
    out_a = np.zeros(t, dtype=np.int64)
    nubar_a = np.full(t, -1, dtype=np.int64)
    tau_a = np.full(t, -1, dtype=np.int64)
    hit_a = np.full(t, -1, dtype=np.int64)
    ret_a = np.full(t, -1, dtype=np.int64)
    maxn_a = np.zeros(t, dtype=np.int64)
    cps_a = np.zeros((t, ncp, d), dtype=np.int64)
    cdef int64_t[:, ::1] endpoint = endpoint_a
    cdef int64_t[::1] rho = rho_a, nu = nu_a, outside = out_a, nubar = nubar_a
    cdef int64_t[::1] tau = tau_a, hit = hit_a, ret = ret_a, maxn = maxn_a
    cdef int64_t[:, :, ::1] cps = cps_a

    cdef int64_t x[64]
    cdef int64_t jump[64]
    cdef Py_ssize_t r, ci
    cdef int64_t i, k, nrm, law, zeros, step, c_rho, c_nu, c_out, c_nb
    cdef int64_t c_hit, c_tau, c_ret, c_max
    cdef uint64_t key
    cdef bint in_k, now_in, start_in
    cdef int a
    if d > 64:
        raise ValueError("dimension above 64 is not supported")

    with nogil:
        for r in range(t):
            for a in range(d):
                x[a] = st[a]
            nrm = norm(x, d)
            in_k = nrm <= L.n_box
            start_in = in_k
            c_rho = 1 if in_k else 0
            c_nu = c_rho
            c_out = 1 - c_rho
            c_max = nrm
            c_hit = -1
            c_tau = -1
            c_ret = -1
            key = kv[r]
            ci = 0
            while ci < ncp and cp[ci] == 0:
                for a in range(d):
                    cps[r, ci, a] = x[a]
                ci += 1
            for i in range(horizon):
                law = law_at(&L, x, in_k)
                sample_jump(&L, law, key, i, jump)
                for a in range(d):
                    x[a] += jump[a]
                k = i + 1
                nrm = norm(x, d)
                now_in = nrm <= L.n_box
                if now_in:
                    c_rho += 1
                    if not in_k:
                        c_nu += 1
                    if c_hit < 0:
                        c_hit = k
                    if nrm == 0 and c_ret < 0:
                        c_ret = k
                else:
                    c_out += 1
                    if start_in and c_tau < 0:
                        c_tau = k
                if nrm > c_max:
                    c_max = nrm
                in_k = now_in
                while ci < ncp and cp[ci] == k:
                    for a in range(d):
                        cps[r, ci, a] = x[a]
                    ci += 1
            for a in range(d):
                endpoint[r, a] = x[a]
            rho[r] = c_rho
            nu[r] = c_nu
            outside[r] = c_out
            hit[r] = c_hit
            tau[r] = c_tau
            ret[r] = c_ret
            maxn[r] = c_max
            if nubar_cap >= 0:
                c_nb = c_nu
                zeros = c_out
                step = horizon
                while zeros < horizon + 1 and step < horizon + nubar_cap:
                    law = law_at(&L, x, in_k)
                    sample_jump(&L, law, key, step, jump)
                    for a in range(d):
                        x[a] += jump[a]
                    now_in = norm(x, d) <= L.n_box
                    if now_in:
                        if not in_k:
                            c_nb += 1
                    else:
                        zeros += 1
                    in_k = now_in
                    step += 1
                nubar[r] = c_nb if zeros >= horizon + 1 else -1
    return {
        "endpoint": endpoint_a,
        "rho": rho_a,
        "nu": nu_a,
        "outside": out_a,
        "nubar": nubar_a,
        "tau": tau_a,
        "first_hit": hit_a,
        "first_return": ret_a,
        "max_norm": maxn_a,
        "checkpoints": cps_a,
    }


def run_coupled(p, keys_x, keys_z, start, int64_t horizon):
    cdef Laws L = _laws_from(p)
    cdef const uint64_t[::1] kx = np.ascontiguousarray(keys_x, dtype=np.uint64)
    cdef const uint64_t[::1] kz = np.ascontiguousarray(keys_z, dtype=np.uint64)
    cdef Py_ssize_t t = kx.shape[0]
    cdef int d = L.d
    cdef const int64_t[::1] st = np.ascontiguousarray(start, dtype=np.int64)
    xe_a = np.zeros((t, d), dtype=np.int64)
    ze_a = np.zeros((t, d), dtype=np.int64)
    sup_a = np.zeros(t, dtype=np.int64)
    rho_a = np.zeros(t, dtype=np.int64)
    tri_a = np.zeros(t, dtype=np.int64)
    cnt_a = np.zeros(t, dtype=np.int64)
    cdef int64_t[:, ::1] xe = xe_a, ze = ze_a
    cdef int64_t[::1] sup = sup_a, rho = rho_a, tri = tri_a, cnt = cnt_a
    cdef vector[int64_t] norms
    cdef int64_t x[64]
    cdef int64_t z[64]
    cdef int64_t jx[64]
    cdef int64_t jz[64]
    cdef int64_t diff[64]
    cdef Py_ssize_t r
    cdef int64_t i, law, nx, dist, c_rho, c_tri, c_cnt, c_sup
    cdef bint in_k
    cdef int a
    if d > 64:
        raise ValueError("dimension above 64 is not supported")
    with nogil:
        for r in range(t):
            for a in range(d):
                x[a] = st[a]
                z[a] = st[a]
            in_k = norm(x, d) <= L.n_box
            c_rho = 1 if in_k else 0
            c_tri = 0
            c_cnt = 0
            c_sup = 0
            for i in range(horizon):
                law = law_at(&L, x, in_k)
                sample_jump(&L, law, kx[r], i, jx)
                if in_k:
                    sample_jump(&L, 0, kz[r], i, jz)
                    nx = norm(jx, d)
                    norms.push_back(nx)
                    c_cnt += 1
                    c_tri += nx + norm(jz, d)
                else:
                    for a in range(d):
                        jz[a] = jx[a]
                for a in range(d):
                    x[a] += jx[a]
                    z[a] += jz[a]
                    diff[a] = x[a] - z[a]
                dist = norm(diff, d)
                if dist > c_sup:
                    c_sup = dist
                in_k = norm(x, d) <= L.n_box
                if in_k:
                    c_rho += 1
            for a in range(d):
                xe[r, a] = x[a]
                ze[r, a] = z[a]
            sup[r] = c_sup
            rho[r] = c_rho
            tri[r] = c_tri
            cnt[r] = c_cnt
    flat = np.empty(norms.size(), dtype=np.int64)
    cdef int64_t[::1] fv = flat
    cdef size_t q
    for q in range(norms.size()):
        fv[q] = norms[q]
    return {
        "x_endpoint": xe_a,
        "z_endpoint": ze_a,
        "sup_distance": sup_a,
        "rho": rho_a,
        "triangle": tri_a,
        "jump_norms": flat,
        "jump_counts": cnt_a,
    }


def run_path(p, uint64_t key, start, int64_t horizon):
    cdef Laws L = _laws_from(p)
    cdef int d = L.d
    path_a = np.zeros((horizon + 1, d), dtype=np.int64)
    cdef int64_t[:, ::1] path = path_a
    cdef const int64_t[::1] st = np.ascontiguousarray(start, dtype=np.int64)
    cdef int64_t x[64]
    cdef int64_t jump[64]
    cdef int64_t i, law
    cdef int a
    if d > 64:
        raise ValueError("dimension above 64 is not supported")
    with nogil:
        for a in range(d):
            x[a] = st[a]
            path[0, a] = x[a]
        for i in range(horizon):
            law = law_at(&L, x, norm(x, d) <= L.n_box)
            sample_jump(&L, law, key, i, jump)
            for a in range(d):
                x[a] += jump[a]
                path[i + 1, a] = x[a]
    return path_a
