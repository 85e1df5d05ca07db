"""Pure numpy/Python versions of the kernels in ``_core.pyx``.

Same signatures and results (to floating point rounding); used when the
extension is not built or ``GRASPSYNTH_PURE=1`` is set.
"""

from __future__ import annotations

import math

import numpy as np


def _closest_points(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on triangle (a, b, c) for every row of ``p`` (Voronoi-region walk)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = p - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = p - c
    d5 = cp @ ab
    d6 = cp @ ac
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        out = a + np.outer(vb / denom, ab) + np.outer(vc / denom, ac)

        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out = np.where(m[:, None], b + w[:, None] * (c - b), out)

        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        w = d2 / (d2 - d6)
        out = np.where(m[:, None], a + w[:, None] * ac, out)

        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[:, None], c, out)

        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        v = d1 / (d1 - d3)
        out = np.where(m[:, None], a + v[:, None] * ab, out)

        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[:, None], b, out)

        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[:, None], a, out)
    return out


def triangle_distances(points, vertices, faces):
    points = np.asarray(points, dtype=np.float64)
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if len(faces) == 0:
        raise ValueError("mesh has no faces")
    best = np.full(len(points), np.inf)
    face_of = np.zeros(len(points), dtype=np.int64)
    for f, (i, j, k) in enumerate(faces):
        q = _closest_points(points, vertices[i], vertices[j], vertices[k])
        d2 = np.einsum("ij,ij->i", points - q, points - q)
        better = d2 < best
        best[better] = d2[better]
        face_of[better] = f
    return np.sqrt(best), face_of


def winding_numbers(points, vertices, faces):
    points = np.asarray(points, dtype=np.float64)
    vertices = np.asarray(vertices, dtype=np.float64)
    total = np.zeros(len(points))
    for i, j, k in np.asarray(faces, dtype=np.int64):
        a = vertices[i] - points
        b = vertices[j] - points
        c = vertices[k] - points
        la = np.linalg.norm(a, axis=1)
        lb = np.linalg.norm(b, axis=1)
        lc = np.linalg.norm(c, axis=1)
        num = np.einsum("ij,ij->i", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("ij,ij->i", a, b) * lc
               + np.einsum("ij,ij->i", b, c) * la + np.einsum("ij,ij->i", c, a) * lb)
        total += 2.0 * np.arctan2(num, den)
    return total / (4.0 * math.pi)


def trilinear(values, origin, h, points):
    values = np.asarray(values, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dims = np.array(values.shape)
    hi = origin + h * (dims - 1)
    clamped = np.clip(points, origin, hi)
    axis_out = (points < origin) | (points > hi)
    u = (clamped - origin) / h
    idx = np.clip(np.floor(u).astype(np.int64), 0, dims - 2)
    f = u - idx
    i, j, k = idx.T
    fx, fy, fz = f.T
    c000 = values[i, j, k]
    c001 = values[i, j, k + 1]
    c010 = values[i, j + 1, k]
    c011 = values[i, j + 1, k + 1]
    c100 = values[i + 1, j, k]
    c101 = values[i + 1, j, k + 1]
    c110 = values[i + 1, j + 1, k]
    c111 = values[i + 1, j + 1, k + 1]
    c00 = c000 * (1 - fx) + c100 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    value = c0 * (1 - fz) + c1 * fz
    gx = ((c100 - c000) * (1 - fy) * (1 - fz) + (c110 - c010) * fy * (1 - fz)
          + (c101 - c001) * (1 - fy) * fz + (c111 - c011) * fy * fz) / h
    gy = ((c10 - c00) * (1 - fz) + (c11 - c01) * fz) / h
    gz = (c1 - c0) / h
    grad = np.stack([gx, gy, gz], axis=1)
    grad[axis_out] = 0.0
    ext = points - clamped
    e = np.linalg.norm(ext, axis=1)
    far = e > 0
    value = value + e
    grad[far] += ext[far] / e[far, None]
    cells = (i * (dims[1] - 1) + j) * (dims[2] - 1) + k
    return value, grad, axis_out.any(axis=1), cells


def _axis_rotation(axis, theta):
    kx, ky, kz = axis
    cs, sn = math.cos(theta), math.sin(theta)
    oc = 1.0 - cs
    return np.array([
        [cs + kx * kx * oc, kx * ky * oc - kz * sn, kx * kz * oc + ky * sn],
        [ky * kx * oc + kz * sn, cs + ky * ky * oc, ky * kz * oc - kx * sn],
        [kz * kx * oc - ky * sn, kz * ky * oc + kx * sn, cs + kz * kz * oc],
    ])


class EnergyKernel:
    """Finger closing and contact energy for one hand against one object grid."""

    def __init__(self, hand, grid_values, origin, h, step, bisect_iters, eps, beta,
                 cap_depth, cap_value):
        self.parent = np.asarray(hand["parent"], dtype=np.int64)
        self.dof = np.asarray(hand["dof"], dtype=np.int64)
        self.jorigin = np.asarray(hand["joint_origin"], dtype=np.float64)
        self.jrot = np.asarray(hand["joint_rot"], dtype=np.float64)
        self.axis = np.asarray(hand["axis"], dtype=np.float64)
        self.cp_local = np.asarray(hand["cp_local"], dtype=np.float64)
        self.cp_seg = np.asarray(hand["cp_seg"], dtype=np.int64)
        self.site_local = np.asarray(hand["site_local"], dtype=np.float64)
        self.site_normal = np.asarray(hand["site_normal"], dtype=np.float64)
        self.site_seg = np.asarray(hand["site_seg"], dtype=np.int64)
        self.close_dof = np.asarray(hand["close_dof"], dtype=np.int64)
        self.close_dir = np.asarray(hand["close_dir"], dtype=np.float64)
        self.close_limit = np.asarray(hand["close_limit"], dtype=np.float64)
        self.close_ptr = np.asarray(hand["close_ptr"], dtype=np.int64)
        self.close_pts = np.asarray(hand["close_pts"], dtype=np.int64)
        self.grid = np.asarray(grid_values, dtype=np.float64)
        self.origin = np.asarray(origin, dtype=np.float64)
        self.h = h
        self.step = step
        self.bisect_iters = bisect_iters
        self.eps = eps
        self.beta = beta
        self.cap_depth = cap_depth
        self.cap_value = cap_value

    def _fk(self, R0, t0, d):
        S = len(self.parent)
        Rw = np.empty((S, 3, 3))
        tw = np.empty((S, 3))
        for s in range(S):
            p = self.parent[s]
            if p < 0:
                Rw[s] = R0
                tw[s] = t0
                continue
            J = _axis_rotation(self.axis[s], d[self.dof[s]])
            Rw[s] = (Rw[p] @ self.jrot[s]) @ J
            tw[s] = Rw[p] @ self.jorigin[s] + tw[p]
        return Rw, tw

    def _world(self, Rw, tw, seg, local):
        return np.einsum("nij,nj->ni", Rw[seg], local) + tw[seg]

    def _min_sdf(self, Rw, tw, c):
        idx = self.close_pts[self.close_ptr[c]:self.close_ptr[c + 1]]
        if len(idx) == 0:
            return math.inf
        w = self._world(Rw, tw, self.cp_seg[idx], self.cp_local[idx])
        return float(trilinear(self.grid, self.origin, self.h, w)[0].min())

    def _close(self, R0, t0, d):
        for c in range(len(self.close_dof)):
            j = self.close_dof[c]
            direction = self.close_dir[c]
            limit = self.close_limit[c]
            if self._min_sdf(*self._fk(R0, t0, d), c) <= self.eps:
                continue
            lo = d[j]
            while (limit - lo) * direction > 0.0:
                nxt = lo + direction * self.step
                if (limit - nxt) * direction < 0.0:
                    nxt = limit
                d[j] = nxt
                if self._min_sdf(*self._fk(R0, t0, d), c) <= self.eps:
                    hi = nxt
                    for _ in range(self.bisect_iters):
                        mid = 0.5 * (lo + hi)
                        d[j] = mid
                        if self._min_sdf(*self._fk(R0, t0, d), c) <= self.eps:
                            hi = mid
                        else:
                            lo = mid
                    d[j] = hi
                    break
                lo = nxt
        return d

    def _energy(self, R0, t0, d):
        Rw, tw = self._fk(R0, t0, d)
        if len(self.cp_local):
            w = self._world(Rw, tw, self.cp_seg, self.cp_local)
            v = trilinear(self.grid, self.origin, self.h, w)[0]
            if np.any(v < -self.cap_depth):
                return self.cap_value
        total = 0.0
        if len(self.site_local) == 0:
            return total
        w = self._world(Rw, tw, self.site_seg, self.site_local)
        m = np.einsum("nij,nj->ni", Rw[self.site_seg], self.site_normal)
        v, g, _, _ = trilinear(self.grid, self.origin, self.h, w)
        # sequential sum keeps the rounding identical to the compiled loop
        for q in range(len(v)):
            gn = math.sqrt(g[q, 0] * g[q, 0] + g[q, 1] * g[q, 1] + g[q, 2] * g[q, 2])
            align = 0.0
            if gn > 0.0:
                align = -(g[q, 0] * m[q, 0] + g[q, 1] * m[q, 1] + g[q, 2] * m[q, 2]) / gn
            if v[q] > 0.0:
                total += v[q]
            total += self.beta * (1.0 - align)
        return total

    def close(self, R, t, d):
        return self._close(np.asarray(R, float), np.asarray(t, float), np.array(d, dtype=float))

    def energy(self, R, t, d):
        return self._energy(np.asarray(R, float), np.asarray(t, float), np.asarray(d, float))

    def close_and_energy(self, R, t, d):
        R = np.asarray(R, float)
        t = np.asarray(t, float)
        d = self._close(R, t, np.array(d, dtype=float))
        return d, self._energy(R, t, d)
