# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Mirrors sriodom.kernels._numpy function for function; see that module for
the contract of each kernel. Accumulation order is fixed (input order), so
output is bit-deterministic for a given input.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

BACKEND = "native"

DEF CROSS_EPS = 1e-9
DEF PLANE_MID_EIG_FLOOR = 1e-6
DEF EIG_ABS_FLOOR = 1e-12


def scatter_min_range(rows, cols, ranges, zs, int height, int width,
                      center_dist=None, double surface_gap=0.5):
    cdef cnp.int64_t[::1] rr = np.ascontiguousarray(rows, dtype=np.int64)
    cdef cnp.int64_t[::1] cc = np.ascontiguousarray(cols, dtype=np.int64)
    cdef double[::1] rv = np.ascontiguousarray(ranges, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(zs, dtype=np.float64)
    rng_arr = np.zeros((height, width), dtype=np.float64)
    z_arr = np.zeros((height, width), dtype=np.float64)
    valid_arr = np.zeros((height, width), dtype=np.uint8)
    cdef double[:, ::1] rng = rng_arr
    cdef double[:, ::1] zmap = z_arr
    cdef cnp.uint8_t[:, ::1] valid = valid_arr
    cdef Py_ssize_t k, n = rv.shape[0]
    cdef Py_ssize_t i, j
    cdef double[::1] cd
    cdef double[:, ::1] best
    for k in range(n):
        i = rr[k]
        j = cc[k]
        if not valid[i, j] or rv[k] < rng[i, j]:
            rng[i, j] = rv[k]
            zmap[i, j] = zv[k]
            valid[i, j] = 1
    if center_dist is None:
        return rng_arr, z_arr, valid_arr.view(bool)
    # Refine: among points within surface_gap of the cell minimum, keep the
    # one closest to the cell center (ties: lowest index). min_view holds
    # the pass-1 minima; rng is overwritten with the winner's range.
    cd = np.ascontiguousarray(center_dist, dtype=np.float64)
    min_arr = rng_arr.copy()
    best_arr = np.full((height, width), np.inf, dtype=np.float64)
    best = best_arr
    cdef double[:, ::1] min_view = min_arr
    for k in range(n):
        i = rr[k]
        j = cc[k]
        if rv[k] <= min_view[i, j] + surface_gap and cd[k] < best[i, j]:
            best[i, j] = cd[k]
            rng[i, j] = rv[k]
            zmap[i, j] = zv[k]
    return rng_arr, z_arr, valid_arr.view(bool)


def convolve3x3_valid(img, valid, kernel):
    cdef double[:, ::1] im = np.ascontiguousarray(img, dtype=np.float64)
    cdef cnp.uint8_t[:, ::1] va = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef double[:, ::1] kk = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t m = im.shape[0], n = im.shape[1]
    out_arr = np.zeros((m, n), dtype=np.float64)
    out_valid_arr = np.zeros((m, n), dtype=np.uint8)
    cdef double[:, ::1] out = out_arr
    cdef cnp.uint8_t[:, ::1] ov = out_valid_arr
    cdef Py_ssize_t i, j
    cdef double acc
    if m < 3 or n < 3:
        return out_arr, out_valid_arr.view(bool)
    for i in range(1, m - 1):
        for j in range(1, n - 1):
            if (va[i - 1, j - 1] and va[i - 1, j] and va[i - 1, j + 1]
                    and va[i, j - 1] and va[i, j] and va[i, j + 1]
                    and va[i + 1, j - 1] and va[i + 1, j] and va[i + 1, j + 1]):
                # Same tap order as the numpy backend: bit-exact match.
                acc = kk[0, 0] * im[i - 1, j - 1]
                acc = acc + kk[0, 1] * im[i - 1, j]
                acc = acc + kk[0, 2] * im[i - 1, j + 1]
                acc = acc + kk[1, 0] * im[i, j - 1]
                acc = acc + kk[1, 1] * im[i, j]
                acc = acc + kk[1, 2] * im[i, j + 1]
                acc = acc + kk[2, 0] * im[i + 1, j - 1]
                acc = acc + kk[2, 1] * im[i + 1, j]
                acc = acc + kk[2, 2] * im[i + 1, j + 1]
                out[i, j] = acc
                ov[i, j] = 1
    return out_arr, out_valid_arr.view(bool)


cdef void _eig3_sym(double a[3][3], double evals[3], double evecs[3][3]) noexcept nogil:
    """Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.

    evals ascending; evecs[:, k] is the eigenvector of evals[k].
    """
    cdef double v[3][3]
    cdef Py_ssize_t i, j, p, q, sweep
    cdef double off, theta, t, c, s, apq, app, aqq, aip, aiq, vip, viq
    for i in range(3):
        for j in range(3):
            v[i][j] = 1.0 if i == j else 0.0
    for sweep in range(64):
        off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2])
        if off < 1e-60:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                apq = a[p][q]
                if fabs(apq) < 1e-300:
                    continue
                app = a[p][p]
                aqq = a[q][q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                a[p][p] = app - t * apq
                a[q][q] = aqq + t * apq
                a[p][q] = 0.0
                a[q][p] = 0.0
                for i in range(3):
                    if i != p and i != q:
                        aip = a[i][p]
                        aiq = a[i][q]
                        a[i][p] = c * aip - s * aiq
                        a[p][i] = a[i][p]
                        a[i][q] = s * aip + c * aiq
                        a[q][i] = a[i][q]
                for i in range(3):
                    vip = v[i][p]
                    viq = v[i][q]
                    v[i][p] = c * vip - s * viq
                    v[i][q] = s * vip + c * viq
    cdef int order[3]
    order[0] = 0
    order[1] = 1
    order[2] = 2
    cdef int tmp
    if a[order[0]][order[0]] > a[order[1]][order[1]]:
        tmp = order[0]; order[0] = order[1]; order[1] = tmp
    if a[order[1]][order[1]] > a[order[2]][order[2]]:
        tmp = order[1]; order[1] = order[2]; order[2] = tmp
    if a[order[0]][order[0]] > a[order[1]][order[1]]:
        tmp = order[0]; order[0] = order[1]; order[1] = tmp
    for j in range(3):
        evals[j] = a[order[j]][order[j]]
        for i in range(3):
            evecs[i][j] = v[i][order[j]]


cdef int _neighborhood_eig(const double[:, ::1] map_pts,
                           const cnp.int64_t[:, ::1] nbr,
                           Py_ssize_t row,
                           double cen[3], double evals[3],
                           double evecs[3][3], double cov[3][3]) noexcept nogil:
    """Centroid + covariance eigendecomposition of one padded neighborhood.

    Returns the neighbor count (0 if none)."""
    cdef Py_ssize_t kmax = nbr.shape[1]
    cdef Py_ssize_t k, a, b
    cdef cnp.int64_t idx
    cdef int cnt = 0
    cdef double d[3]
    cen[0] = 0.0; cen[1] = 0.0; cen[2] = 0.0
    for k in range(kmax):
        idx = nbr[row, k]
        if idx < 0:
            continue
        cnt += 1
        cen[0] += map_pts[idx, 0]
        cen[1] += map_pts[idx, 1]
        cen[2] += map_pts[idx, 2]
    if cnt == 0:
        return 0
    cen[0] /= cnt; cen[1] /= cnt; cen[2] /= cnt
    for a in range(3):
        for b in range(3):
            cov[a][b] = 0.0
    for k in range(kmax):
        idx = nbr[row, k]
        if idx < 0:
            continue
        d[0] = map_pts[idx, 0] - cen[0]
        d[1] = map_pts[idx, 1] - cen[1]
        d[2] = map_pts[idx, 2] - cen[2]
        for a in range(3):
            for b in range(3):
                cov[a][b] += d[a] * d[b]
    for a in range(3):
        for b in range(3):
            cov[a][b] /= cnt
    cdef double work[3][3]
    for a in range(3):
        for b in range(3):
            work[a][b] = cov[a][b]
    _eig3_sym(work, evals, evecs)
    return cnt


def fit_lines(map_pts, nbr_idx, int min_pts, double ratio):
    cdef double[:, ::1] mp = np.ascontiguousarray(map_pts, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] nbr = np.ascontiguousarray(nbr_idx, dtype=np.int64)
    cdef Py_ssize_t n = nbr.shape[0]
    cen_arr = np.zeros((n, 3), dtype=np.float64)
    dir_arr = np.zeros((n, 3), dtype=np.float64)
    ok_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] cen_out = cen_arr
    cdef double[:, ::1] dir_out = dir_arr
    cdef cnp.uint8_t[::1] ok = ok_arr
    cdef Py_ssize_t i
    cdef int cnt
    cdef double cen[3]
    cdef double evals[3]
    cdef double evecs[3][3]
    cdef double cov[3][3]
    if mp.shape[0] == 0:
        return cen_arr, dir_arr, ok_arr.view(bool)
    for i in range(n):
        cnt = _neighborhood_eig(mp, nbr, i, cen, evals, evecs, cov)
        if (cnt >= min_pts and evals[2] > EIG_ABS_FLOOR
                and evals[2] >= ratio * evals[1]):
            ok[i] = 1
            cen_out[i, 0] = cen[0]
            cen_out[i, 1] = cen[1]
            cen_out[i, 2] = cen[2]
            dir_out[i, 0] = evecs[0][2]
            dir_out[i, 1] = evecs[1][2]
            dir_out[i, 2] = evecs[2][2]
    return cen_arr, dir_arr, ok_arr.view(bool)


def fit_planes(map_pts, nbr_idx, int min_pts, double flatness, double dist_max):
    cdef double[:, ::1] mp = np.ascontiguousarray(map_pts, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] nbr = np.ascontiguousarray(nbr_idx, dtype=np.int64)
    cdef Py_ssize_t n = nbr.shape[0]
    cen_arr = np.zeros((n, 3), dtype=np.float64)
    nrm_arr = np.zeros((n, 3), dtype=np.float64)
    ok_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] cen_out = cen_arr
    cdef double[:, ::1] nrm_out = nrm_arr
    cdef cnp.uint8_t[::1] ok = ok_arr
    cdef Py_ssize_t i, k
    cdef cnp.int64_t idx
    cdef int cnt
    cdef double cen[3]
    cdef double evals[3]
    cdef double evecs[3][3]
    cdef double cov[3][3]
    cdef double mean_dist, dx, dy, dz
    if mp.shape[0] == 0:
        return cen_arr, nrm_arr, ok_arr.view(bool)
    for i in range(n):
        cnt = _neighborhood_eig(mp, nbr, i, cen, evals, evecs, cov)
        if cnt < min_pts or evals[2] <= EIG_ABS_FLOOR:
            continue
        if evals[1] <= PLANE_MID_EIG_FLOOR * evals[2]:
            continue
        if evals[0] > flatness * evals[1]:
            continue
        mean_dist = 0.0
        for k in range(nbr.shape[1]):
            idx = nbr[i, k]
            if idx < 0:
                continue
            dx = mp[idx, 0] - cen[0]
            dy = mp[idx, 1] - cen[1]
            dz = mp[idx, 2] - cen[2]
            mean_dist += fabs(dx * evecs[0][0] + dy * evecs[1][0] + dz * evecs[2][0])
        mean_dist /= cnt
        if mean_dist > dist_max:
            continue
        ok[i] = 1
        cen_out[i, 0] = cen[0]
        cen_out[i, 1] = cen[1]
        cen_out[i, 2] = cen[2]
        nrm_out[i, 0] = evecs[0][0]
        nrm_out[i, 1] = evecs[1][0]
        nrm_out[i, 2] = evecs[2][0]
    return cen_arr, nrm_arr, ok_arr.view(bool)


cdef inline double _huber_w(double r_abs, double delta) noexcept nogil:
    if delta <= 0.0 or r_abs <= delta:
        return 1.0
    return delta / r_abs


cdef inline double _huber_c(double r_abs, double delta) noexcept nogil:
    if delta <= 0.0 or r_abs <= delta:
        return 0.5 * r_abs * r_abs
    return delta * (r_abs - 0.5 * delta)


cdef void _accum_row(double[::1] hbuf, double[::1] bbuf, double* jrow,
                     double r, double w) noexcept nogil:
    cdef Py_ssize_t a, b
    for a in range(6):
        bbuf[a] += w * jrow[a] * r
        for b in range(6):
            hbuf[a * 6 + b] += w * jrow[a] * jrow[b]


def accum_point_to_line(pts, line_c, line_d, ok, rot, trans, double huber_delta):
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef double[:, ::1] cen = np.ascontiguousarray(line_c, dtype=np.float64)
    cdef double[:, ::1] dirs = np.ascontiguousarray(line_d, dtype=np.float64)
    cdef cnp.uint8_t[::1] okv = np.ascontiguousarray(ok, dtype=np.uint8)
    cdef double[:, ::1] R = np.ascontiguousarray(rot, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(trans, dtype=np.float64)
    H_arr = np.zeros(36, dtype=np.float64)
    b_arr = np.zeros(6, dtype=np.float64)
    cdef double[::1] hbuf = H_arr
    cdef double[::1] bbuf = b_arr
    cdef Py_ssize_t i, a, n = p.shape[0]
    cdef int count = 0
    cdef double cost = 0.0
    cdef double q[3]
    cdef double d[3]
    cdef double cvec[3]
    cdef double unit[3]
    cdef double grad[3]
    cdef double jv[3]
    cdef double jrow[6]
    cdef double r, w, denom
    for i in range(n):
        if not okv[i]:
            continue
        for a in range(3):
            q[a] = R[a, 0] * p[i, 0] + R[a, 1] * p[i, 1] + R[a, 2] * p[i, 2] + t[a]
            q[a] = q[a] - cen[i, a]
        cvec[0] = q[1] * dirs[i, 2] - q[2] * dirs[i, 1]
        cvec[1] = q[2] * dirs[i, 0] - q[0] * dirs[i, 2]
        cvec[2] = q[0] * dirs[i, 1] - q[1] * dirs[i, 0]
        r = sqrt(cvec[0] * cvec[0] + cvec[1] * cvec[1] + cvec[2] * cvec[2])
        denom = r if r > CROSS_EPS else CROSS_EPS
        for a in range(3):
            unit[a] = cvec[a] / denom
        grad[0] = dirs[i, 1] * unit[2] - dirs[i, 2] * unit[1]
        grad[1] = dirs[i, 2] * unit[0] - dirs[i, 0] * unit[2]
        grad[2] = dirs[i, 0] * unit[1] - dirs[i, 1] * unit[0]
        for a in range(3):
            jv[a] = grad[0] * R[0, a] + grad[1] * R[1, a] + grad[2] * R[2, a]
        jrow[0] = jv[0]
        jrow[1] = jv[1]
        jrow[2] = jv[2]
        jrow[3] = p[i, 1] * jv[2] - p[i, 2] * jv[1]
        jrow[4] = p[i, 2] * jv[0] - p[i, 0] * jv[2]
        jrow[5] = p[i, 0] * jv[1] - p[i, 1] * jv[0]
        w = _huber_w(r, huber_delta)
        cost += _huber_c(r, huber_delta)
        _accum_row(hbuf, bbuf, jrow, r, w)
        count += 1
    return H_arr.reshape(6, 6), b_arr, cost, count


def accum_point_to_plane(pts, plane_c, plane_n, ok, rot, trans, double huber_delta):
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef double[:, ::1] cen = np.ascontiguousarray(plane_c, dtype=np.float64)
    cdef double[:, ::1] nrm = np.ascontiguousarray(plane_n, dtype=np.float64)
    cdef cnp.uint8_t[::1] okv = np.ascontiguousarray(ok, dtype=np.uint8)
    cdef double[:, ::1] R = np.ascontiguousarray(rot, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(trans, dtype=np.float64)
    H_arr = np.zeros(36, dtype=np.float64)
    b_arr = np.zeros(6, dtype=np.float64)
    cdef double[::1] hbuf = H_arr
    cdef double[::1] bbuf = b_arr
    cdef Py_ssize_t i, a, n = p.shape[0]
    cdef int count = 0
    cdef double cost = 0.0
    cdef double q[3]
    cdef double jv[3]
    cdef double jrow[6]
    cdef double r, w
    for i in range(n):
        if not okv[i]:
            continue
        for a in range(3):
            q[a] = R[a, 0] * p[i, 0] + R[a, 1] * p[i, 1] + R[a, 2] * p[i, 2] + t[a]
            q[a] = q[a] - cen[i, a]
        r = q[0] * nrm[i, 0] + q[1] * nrm[i, 1] + q[2] * nrm[i, 2]
        for a in range(3):
            jv[a] = nrm[i, 0] * R[0, a] + nrm[i, 1] * R[1, a] + nrm[i, 2] * R[2, a]
        jrow[0] = jv[0]
        jrow[1] = jv[1]
        jrow[2] = jv[2]
        jrow[3] = p[i, 1] * jv[2] - p[i, 2] * jv[1]
        jrow[4] = p[i, 2] * jv[0] - p[i, 0] * jv[2]
        jrow[5] = p[i, 0] * jv[1] - p[i, 1] * jv[0]
        w = _huber_w(fabs(r), huber_delta)
        cost += _huber_c(fabs(r), huber_delta)
        _accum_row(hbuf, bbuf, jrow, r, w)
        count += 1
    return H_arr.reshape(6, 6), b_arr, cost, count
