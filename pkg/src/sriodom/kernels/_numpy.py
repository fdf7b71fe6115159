"""Pure-numpy kernel backend.

Reference semantics for the hot inner loops; the compiled backend in
_native.pyx mirrors these functions one for one. Floating-point accumulation
order is fixed so each backend is bit-deterministic:

1. scatter_min_range   — nearest-wins projection scatter (ties: lowest index)
2. convolve3x3_valid   — valid-aware 3x3 convolution, canonical tap order
3. fit_lines           — batched neighborhood line fits (largest eigenvector)
4. fit_planes          — batched neighborhood plane fits (smallest eigenvector)
5. accum_point_to_line — Huber-weighted normal equations for edge residuals
6. accum_point_to_plane— Huber-weighted normal equations for plane residuals
"""

import numpy as np

BACKEND = "python"

# Regularizes the unit vector of a near-zero point-to-line cross product.
CROSS_EPS = 1e-9
# Relative floor on the middle eigenvalue: below it a "plane" is really a line.
PLANE_MID_EIG_FLOOR = 1e-6
EIG_ABS_FLOOR = 1e-12


def scatter_min_range(rows, cols, ranges, zs, height, width,
                      center_dist=None, surface_gap=0.5):
    """Scatter per-point (range, z) into grids; nearest range wins per cell.

    Ties on range keep the point with the lowest input index. When
    `center_dist` is given (each point's distance from its cell center, any
    consistent unit), the winner is refined: among points within
    `surface_gap` of the cell's minimum range (the same surface, not an
    occluder), the one closest to the cell center wins. That keeps the
    cell's nominal coordinates an unbiased sample of the surface while
    preserving occlusion ordering. Returns (range_grid, z_grid, valid_grid).
    """
    rng = np.zeros((height, width), dtype=np.float64)
    zmap = np.zeros((height, width), dtype=np.float64)
    valid = np.zeros((height, width), dtype=bool)
    n = len(ranges)
    if n == 0:
        return rng, zmap, valid
    idx = np.arange(n)
    # Descending range, then descending index: the final (winning) write per
    # cell is the minimum range, lowest index among exact ties.
    order = np.lexsort((-idx, -ranges))
    r, c = rows[order], cols[order]
    rng[r, c] = ranges[order]
    zmap[r, c] = zs[order]
    valid[r, c] = True
    if center_dist is None:
        return rng, zmap, valid
    near = ranges <= rng[rows, cols] + surface_gap
    ord2 = np.lexsort((-idx[near], -center_dist[near]))
    r2, c2 = rows[near][ord2], cols[near][ord2]
    rng[r2, c2] = ranges[near][ord2]
    zmap[r2, c2] = zs[near][ord2]
    return rng, zmap, valid


def convolve3x3_valid(img, valid, kernel):
    """3x3 convolution defined only where all nine taps are valid.

    Border pixels and pixels with any invalid neighbor yield 0 with a False
    validity flag. Taps accumulate in row-major order so the result is
    bit-identical to a naive nine-term dot product.
    """
    m, n = img.shape
    out = np.zeros((m, n), dtype=np.float64)
    out_valid = np.zeros((m, n), dtype=bool)
    if m < 3 or n < 3:
        return out, out_valid
    k = np.asarray(kernel, dtype=np.float64)
    acc = k[0, 0] * img[0 : m - 2, 0 : n - 2]
    acc = acc + k[0, 1] * img[0 : m - 2, 1 : n - 1]
    acc = acc + k[0, 2] * img[0 : m - 2, 2:n]
    acc = acc + k[1, 0] * img[1 : m - 1, 0 : n - 2]
    acc = acc + k[1, 1] * img[1 : m - 1, 1 : n - 1]
    acc = acc + k[1, 2] * img[1 : m - 1, 2:n]
    acc = acc + k[2, 0] * img[2:m, 0 : n - 2]
    acc = acc + k[2, 1] * img[2:m, 1 : n - 1]
    acc = acc + k[2, 2] * img[2:m, 2:n]
    v = (
        valid[0 : m - 2, 0 : n - 2]
        & valid[0 : m - 2, 1 : n - 1]
        & valid[0 : m - 2, 2:n]
        & valid[1 : m - 1, 0 : n - 2]
        & valid[1 : m - 1, 1 : n - 1]
        & valid[1 : m - 1, 2:n]
        & valid[2:m, 0 : n - 2]
        & valid[2:m, 1 : n - 1]
        & valid[2:m, 2:n]
    )
    out[1 : m - 1, 1 : n - 1] = np.where(v, acc, 0.0)
    out_valid[1 : m - 1, 1 : n - 1] = v
    return out, out_valid


def _gather_neighborhoods(map_pts, nbr_idx):
    mask = nbr_idx >= 0
    counts = mask.sum(axis=1)
    safe = np.clip(nbr_idx, 0, max(len(map_pts) - 1, 0))
    pts = map_pts[safe] * mask[:, :, None]
    safe_counts = np.maximum(counts, 1)
    centroids = pts.sum(axis=1) / safe_counts[:, None]
    diffs = (map_pts[safe] - centroids[:, None, :]) * mask[:, :, None]
    covs = np.einsum("nka,nkb->nab", diffs, diffs) / safe_counts[:, None, None]
    return mask, counts, centroids, covs, diffs


def fit_lines(map_pts, nbr_idx, min_pts, ratio):
    """Fit a line through each padded neighborhood (index -1 = missing).

    A fit is accepted when the largest covariance eigenvalue dominates the
    middle one by `ratio`. Returns (centroids, directions, ok).
    """
    n = nbr_idx.shape[0]
    if n == 0 or len(map_pts) == 0:
        z = np.zeros((n, 3))
        return z, z.copy(), np.zeros(n, dtype=bool)
    mask, counts, centroids, covs, _ = _gather_neighborhoods(map_pts, nbr_idx)
    evals, evecs = np.linalg.eigh(covs)
    ok = (
        (counts >= min_pts)
        & (evals[:, 2] > EIG_ABS_FLOOR)
        & (evals[:, 2] >= ratio * evals[:, 1])
    )
    directions = evecs[:, :, 2].copy()
    directions[~ok] = 0.0
    centroids = centroids.copy()
    centroids[~ok] = 0.0
    return centroids, directions, ok


def fit_planes(map_pts, nbr_idx, min_pts, flatness, dist_max):
    """Fit a plane through each padded neighborhood.

    Degenerate when the smallest eigenvalue exceeds `flatness` times the
    middle one, when the middle eigenvalue vanishes (collinear points), or
    when the mean absolute point-to-plane distance exceeds `dist_max`.
    Returns (centroids, normals, ok).
    """
    n = nbr_idx.shape[0]
    if n == 0 or len(map_pts) == 0:
        z = np.zeros((n, 3))
        return z, z.copy(), np.zeros(n, dtype=bool)
    mask, counts, centroids, covs, diffs = _gather_neighborhoods(map_pts, nbr_idx)
    evals, evecs = np.linalg.eigh(covs)
    normals = evecs[:, :, 0]
    dists = np.abs(np.einsum("nka,na->nk", diffs, normals))
    mean_dist = dists.sum(axis=1) / np.maximum(counts, 1)
    ok = (
        (counts >= min_pts)
        & (evals[:, 2] > EIG_ABS_FLOOR)
        & (evals[:, 1] > PLANE_MID_EIG_FLOOR * evals[:, 2])
        & (evals[:, 0] <= flatness * evals[:, 1])
        & (mean_dist <= dist_max)
    )
    normals = normals.copy()
    normals[~ok] = 0.0
    centroids = centroids.copy()
    centroids[~ok] = 0.0
    return centroids, normals, ok


def _huber_weight(r_abs, delta):
    if delta <= 0.0:
        return np.ones_like(r_abs)
    return np.where(r_abs <= delta, 1.0, delta / np.maximum(r_abs, 1e-300))


def _huber_cost(r_abs, delta):
    if delta <= 0.0:
        return 0.5 * r_abs * r_abs
    return np.where(r_abs <= delta, 0.5 * r_abs * r_abs, delta * (r_abs - 0.5 * delta))


def _accumulate(J, r, r_abs, huber_delta):
    w = _huber_weight(r_abs, huber_delta)
    H = (J * w[:, None]).T @ J
    b = (J * (w * r)[:, None]).sum(axis=0)
    cost = float(_huber_cost(r_abs, huber_delta).sum())
    return H, b, cost


def accum_point_to_line(pts, line_c, line_d, ok, rot, trans, huber_delta):
    """Accumulate Gauss-Newton normal equations for point-to-line residuals.

    Residual per point: |(R p + t - c) x d|. Returns (H, b, cost, count).
    """
    H = np.zeros((6, 6))
    b = np.zeros(6)
    if not np.any(ok):
        return H, b, 0.0, 0
    p = pts[ok]
    c = line_c[ok]
    d = line_d[ok]
    q = p @ rot.T + trans
    cvec = np.cross(q - c, d)
    r = np.linalg.norm(cvec, axis=1)
    unit = cvec / np.maximum(r, CROSS_EPS)[:, None]
    grad = np.cross(d, unit)  # d|cvec|/d(q)
    jv = grad @ rot  # row i = rot^T grad_i
    jw = np.cross(p, jv)
    J = np.hstack([jv, jw])
    H, b, cost = _accumulate(J, r, r, huber_delta)
    return H, b, cost, int(len(p))


def accum_point_to_plane(pts, plane_c, plane_n, ok, rot, trans, huber_delta):
    """Accumulate Gauss-Newton normal equations for point-to-plane residuals.

    Residual per point: (R p + t - c) . n (signed). Returns (H, b, cost, count).
    """
    H = np.zeros((6, 6))
    b = np.zeros(6)
    if not np.any(ok):
        return H, b, 0.0, 0
    p = pts[ok]
    c = plane_c[ok]
    nrm = plane_n[ok]
    q = p @ rot.T + trans
    r = np.einsum("na,na->n", q - c, nrm)
    jv = nrm @ rot
    jw = np.cross(p, jv)
    J = np.hstack([jv, jw])
    H, b, cost = _accumulate(J, r, np.abs(r), huber_delta)
    return H, b, cost, int(len(p))
