# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: triangle distances, winding numbers, trilinear SDF
lookups and the finger-closing / contact-energy evaluation used by the
annealer.  ``_fallback.py`` mirrors every function here in numpy/Python."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, floor, cos, sin, M_PI

cnp.import_array()


cdef inline void _closest_on_triangle(double px, double py, double pz,
                                      const double* a, const double* b, const double* c,
                                      double* out) noexcept nogil:
    cdef double abx = b[0] - a[0], aby = b[1] - a[1], abz = b[2] - a[2]
    cdef double acx = c[0] - a[0], acy = c[1] - a[1], acz = c[2] - a[2]
    cdef double apx = px - a[0], apy = py - a[1], apz = pz - a[2]
    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double bpx, bpy, bpz, d3, d4, vc, v, cpx, cpy, cpz, d5, d6, vb, w, va, denom
    if d1 <= 0.0 and d2 <= 0.0:
        out[0] = a[0]; out[1] = a[1]; out[2] = a[2]
        return
    bpx = px - b[0]; bpy = py - b[1]; bpz = pz - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        out[0] = b[0]; out[1] = b[1]; out[2] = b[2]
        return
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        out[0] = a[0] + v * abx; out[1] = a[1] + v * aby; out[2] = a[2] + v * abz
        return
    cpx = px - c[0]; cpy = py - c[1]; cpz = pz - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        out[0] = c[0]; out[1] = c[1]; out[2] = c[2]
        return
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        out[0] = a[0] + w * acx; out[1] = a[1] + w * acy; out[2] = a[2] + w * acz
        return
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out[0] = b[0] + w * (c[0] - b[0])
        out[1] = b[1] + w * (c[1] - b[1])
        out[2] = b[2] + w * (c[2] - b[2])
        return
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    out[0] = a[0] + abx * v + acx * w
    out[1] = a[1] + aby * v + acy * w
    out[2] = a[2] + abz * v + acz * w


def triangle_distances(double[:, ::1] points, double[:, ::1] vertices, long[:, ::1] faces):
    """Unsigned distance from each point to the closest triangle and its index."""
    cdef Py_ssize_t n = points.shape[0], nf = faces.shape[0]
    cdef Py_ssize_t i, f, best_f, k
    cdef double[:, ::1] tri = np.empty((nf, 9), dtype=np.float64)
    cdef double[:, ::1] centre = np.empty((nf, 3), dtype=np.float64)
    cdef double[::1] radius = np.empty(nf, dtype=np.float64)
    cdef double[::1] dist = np.empty(n, dtype=np.float64)
    cdef long[::1] face_of = np.empty(n, dtype=np.int64)
    cdef double q[3]
    cdef double px, py, pz, dx, dy, dz, d2, best, r, cx, cy, cz, rr, lim
    if nf == 0:
        raise ValueError("mesh has no faces")
    for f in range(nf):
        for k in range(3):
            tri[f, 3 * k] = vertices[faces[f, k], 0]
            tri[f, 3 * k + 1] = vertices[faces[f, k], 1]
            tri[f, 3 * k + 2] = vertices[faces[f, k], 2]
        cx = (tri[f, 0] + tri[f, 3] + tri[f, 6]) / 3.0
        cy = (tri[f, 1] + tri[f, 4] + tri[f, 7]) / 3.0
        cz = (tri[f, 2] + tri[f, 5] + tri[f, 8]) / 3.0
        centre[f, 0] = cx; centre[f, 1] = cy; centre[f, 2] = cz
        r = 0.0
        for k in range(3):
            dx = tri[f, 3 * k] - cx; dy = tri[f, 3 * k + 1] - cy; dz = tri[f, 3 * k + 2] - cz
            rr = dx * dx + dy * dy + dz * dz
            if rr > r:
                r = rr
        radius[f] = sqrt(r)
    best_f = 0
    with nogil:
        for i in range(n):
            px = points[i, 0]; py = points[i, 1]; pz = points[i, 2]
            # previous point's closest face gives a tight initial bound
            _closest_on_triangle(px, py, pz, &tri[best_f, 0], &tri[best_f, 3], &tri[best_f, 6], q)
            dx = px - q[0]; dy = py - q[1]; dz = pz - q[2]
            best = dx * dx + dy * dy + dz * dz
            for f in range(nf):
                dx = px - centre[f, 0]; dy = py - centre[f, 1]; dz = pz - centre[f, 2]
                d2 = dx * dx + dy * dy + dz * dz
                lim = sqrt(best) + radius[f]
                if d2 > lim * lim:
                    continue
                _closest_on_triangle(px, py, pz, &tri[f, 0], &tri[f, 3], &tri[f, 6], q)
                dx = px - q[0]; dy = py - q[1]; dz = pz - q[2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best or (d2 == best and f < best_f):
                    best = d2
                    best_f = f
            dist[i] = sqrt(best)
            face_of[i] = best_f
    return np.asarray(dist), np.asarray(face_of)


def winding_numbers(double[:, ::1] points, double[:, ::1] vertices, long[:, ::1] faces):
    """Generalized winding number of each point (1 inside, 0 outside)."""
    cdef Py_ssize_t n = points.shape[0], nf = faces.shape[0]
    cdef Py_ssize_t i, f
    cdef double[::1] out = np.empty(n, dtype=np.float64)
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz, la, lb, lc, num, den, total
    with nogil:
        for i in range(n):
            total = 0.0
            for f in range(nf):
                ax = vertices[faces[f, 0], 0] - points[i, 0]
                ay = vertices[faces[f, 0], 1] - points[i, 1]
                az = vertices[faces[f, 0], 2] - points[i, 2]
                bx = vertices[faces[f, 1], 0] - points[i, 0]
                by = vertices[faces[f, 1], 1] - points[i, 1]
                bz = vertices[faces[f, 1], 2] - points[i, 2]
                cx = vertices[faces[f, 2], 0] - points[i, 0]
                cy = vertices[faces[f, 2], 1] - points[i, 1]
                cz = vertices[faces[f, 2], 2] - points[i, 2]
                la = sqrt(ax * ax + ay * ay + az * az)
                lb = sqrt(bx * bx + by * by + bz * bz)
                lc = sqrt(cx * cx + cy * cy + cz * cz)
                num = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
                den = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
                       + (bx * cx + by * cy + bz * cz) * la + (cx * ax + cy * ay + cz * az) * lb)
                total += 2.0 * atan2(num, den)
            out[i] = total / (4.0 * M_PI)
    return np.asarray(out)


cdef inline double _trilinear_one(const double* vals, Py_ssize_t ny, Py_ssize_t nz,
                                  Py_ssize_t nx, double ox, double oy, double oz, double h,
                                  double px, double py, double pz, double* grad,
                                  long* cell, bint* outside) noexcept nogil:
    cdef double ext_x = ox + h * (nx - 1), ext_y = oy + h * (ny - 1), ext_z = oz + h * (nz - 1)
    cdef double cx = px, cy = py, cz = pz
    cdef bint clx = 0, cly = 0, clz = 0
    cdef double ux, uy, uz, fx, fy, fz, gx, gy, gz, ex, ey, ez, e
    cdef Py_ssize_t i, j, k, s_i, s_j
    cdef double c000, c100, c010, c110, c001, c101, c011, c111
    cdef double c00, c10, c01, c11, c0, c1, value
    if cx < ox:
        cx = ox; clx = 1
    elif cx > ext_x:
        cx = ext_x; clx = 1
    if cy < oy:
        cy = oy; cly = 1
    elif cy > ext_y:
        cy = ext_y; cly = 1
    if cz < oz:
        cz = oz; clz = 1
    elif cz > ext_z:
        cz = ext_z; clz = 1
    ux = (cx - ox) / h; uy = (cy - oy) / h; uz = (cz - oz) / h
    i = <Py_ssize_t>floor(ux); j = <Py_ssize_t>floor(uy); k = <Py_ssize_t>floor(uz)
    if i > nx - 2:
        i = nx - 2
    if j > ny - 2:
        j = ny - 2
    if k > nz - 2:
        k = nz - 2
    if i < 0:
        i = 0
    if j < 0:
        j = 0
    if k < 0:
        k = 0
    fx = ux - i; fy = uy - j; fz = uz - k
    s_i = ny * nz
    s_j = nz
    c000 = vals[i * s_i + j * s_j + k]
    c001 = vals[i * s_i + j * s_j + k + 1]
    c010 = vals[i * s_i + (j + 1) * s_j + k]
    c011 = vals[i * s_i + (j + 1) * s_j + k + 1]
    c100 = vals[(i + 1) * s_i + j * s_j + k]
    c101 = vals[(i + 1) * s_i + j * s_j + k + 1]
    c110 = vals[(i + 1) * s_i + (j + 1) * s_j + k]
    c111 = vals[(i + 1) * s_i + (j + 1) * s_j + k + 1]
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
    if clx:
        gx = 0.0
    if cly:
        gy = 0.0
    if clz:
        gz = 0.0
    ex = px - cx; ey = py - cy; ez = pz - cz
    e = sqrt(ex * ex + ey * ey + ez * ez)
    if e > 0.0:
        value += e
        gx += ex / e; gy += ey / e; gz += ez / e
    grad[0] = gx; grad[1] = gy; grad[2] = gz
    cell[0] = (i * (ny - 1) + j) * (nz - 1) + k
    outside[0] = clx or cly or clz
    return value


def trilinear(double[:, :, ::1] values, double[::1] origin, double h, double[:, ::1] points):
    """Trilinear value, exact interpolant gradient, outside flag and cell id."""
    cdef Py_ssize_t n = points.shape[0], i
    cdef Py_ssize_t nx = values.shape[0], ny = values.shape[1], nz = values.shape[2]
    cdef double[::1] out = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] grads = np.empty((n, 3), dtype=np.float64)
    cdef cnp.uint8_t[::1] flags = np.empty(n, dtype=np.uint8)
    cdef long[::1] cells = np.empty(n, dtype=np.int64)
    cdef bint outside
    cdef long cell
    with nogil:
        for i in range(n):
            out[i] = _trilinear_one(&values[0, 0, 0], ny, nz, nx, origin[0], origin[1], origin[2], h,
                                    points[i, 0], points[i, 1], points[i, 2], &grads[i, 0],
                                    &cell, &outside)
            flags[i] = outside
            cells[i] = cell
    return np.asarray(out), np.asarray(grads), np.asarray(flags).astype(bool), np.asarray(cells)


cdef class EnergyKernel:
    """Finger closing and contact energy for one hand against one object grid."""

    cdef int S, D, P, Q, C
    cdef int[::1] parent, dof, cp_seg, site_seg, close_dof, close_ptr, close_pts
    cdef double[:, ::1] jorigin, axis, cp_local, site_local, site_normal
    cdef double[:, :, ::1] jrot
    cdef double[::1] close_dir, close_limit
    cdef double[:, :, ::1] grid
    cdef double ox, oy, oz, h
    cdef public double step, eps, beta, cap_depth, cap_value
    cdef public int bisect_iters
    cdef double[:, :, ::1] Rw
    cdef double[:, ::1] tw

    def __init__(self, hand, grid_values, origin, double h, double step, int bisect_iters,
                 double eps, double beta, double cap_depth, double cap_value):
        self.parent = np.ascontiguousarray(hand["parent"], dtype=np.int32)
        self.dof = np.ascontiguousarray(hand["dof"], dtype=np.int32)
        self.jorigin = np.ascontiguousarray(hand["joint_origin"], dtype=np.float64)
        self.jrot = np.ascontiguousarray(hand["joint_rot"], dtype=np.float64)
        self.axis = np.ascontiguousarray(hand["axis"], dtype=np.float64)
        self.cp_local = np.ascontiguousarray(hand["cp_local"], dtype=np.float64)
        self.cp_seg = np.ascontiguousarray(hand["cp_seg"], dtype=np.int32)
        self.site_local = np.ascontiguousarray(hand["site_local"], dtype=np.float64)
        self.site_normal = np.ascontiguousarray(hand["site_normal"], dtype=np.float64)
        self.site_seg = np.ascontiguousarray(hand["site_seg"], dtype=np.int32)
        self.close_dof = np.ascontiguousarray(hand["close_dof"], dtype=np.int32)
        self.close_dir = np.ascontiguousarray(hand["close_dir"], dtype=np.float64)
        self.close_limit = np.ascontiguousarray(hand["close_limit"], dtype=np.float64)
        self.close_ptr = np.ascontiguousarray(hand["close_ptr"], dtype=np.int32)
        self.close_pts = np.ascontiguousarray(hand["close_pts"], dtype=np.int32)
        self.S = self.parent.shape[0]
        self.D = int(hand["n_dof"])
        self.P = self.cp_local.shape[0]
        self.Q = self.site_local.shape[0]
        self.C = self.close_dof.shape[0]
        self.grid = np.ascontiguousarray(grid_values, dtype=np.float64)
        self.ox = origin[0]; self.oy = origin[1]; self.oz = origin[2]
        self.h = h
        self.step = step
        self.bisect_iters = bisect_iters
        self.eps = eps
        self.beta = beta
        self.cap_depth = cap_depth
        self.cap_value = cap_value
        self.Rw = np.zeros((self.S, 3, 3), dtype=np.float64)
        self.tw = np.zeros((self.S, 3), dtype=np.float64)

    cdef void _fk(self, const double* R0, const double* t0, const double* d) noexcept nogil:
        cdef int s, p, a, b, c
        cdef double th, cs, sn, kx, ky, kz, oc
        cdef double J[3][3]
        cdef double M[3][3]
        cdef double acc
        for s in range(self.S):
            p = self.parent[s]
            if p < 0:
                for a in range(3):
                    for b in range(3):
                        self.Rw[s, a, b] = R0[3 * a + b]
                    self.tw[s, a] = t0[a]
                continue
            th = d[self.dof[s]]
            cs = cos(th); sn = sin(th); oc = 1.0 - cs
            kx = self.axis[s, 0]; ky = self.axis[s, 1]; kz = self.axis[s, 2]
            J[0][0] = cs + kx * kx * oc
            J[0][1] = kx * ky * oc - kz * sn
            J[0][2] = kx * kz * oc + ky * sn
            J[1][0] = ky * kx * oc + kz * sn
            J[1][1] = cs + ky * ky * oc
            J[1][2] = ky * kz * oc - kx * sn
            J[2][0] = kz * kx * oc - ky * sn
            J[2][1] = kz * ky * oc + kx * sn
            J[2][2] = cs + kz * kz * oc
            # M = Rw[p] @ jrot[s]
            for a in range(3):
                for b in range(3):
                    acc = 0.0
                    for c in range(3):
                        acc = acc + self.Rw[p, a, c] * self.jrot[s, c, b]
                    M[a][b] = acc
            for a in range(3):
                for b in range(3):
                    acc = 0.0
                    for c in range(3):
                        acc = acc + M[a][c] * J[c][b]
                    self.Rw[s, a, b] = acc
                acc = 0.0
                for c in range(3):
                    acc = acc + self.Rw[p, a, c] * self.jorigin[s, c]
                self.tw[s, a] = acc + self.tw[p, a]

    cdef inline double _point_sdf(self, int seg, const double* local, double* grad, double* world) noexcept nogil:
        cdef int a
        cdef long cell
        cdef bint outside
        for a in range(3):
            world[a] = (self.Rw[seg, a, 0] * local[0] + self.Rw[seg, a, 1] * local[1]
                        + self.Rw[seg, a, 2] * local[2] + self.tw[seg, a])
        return _trilinear_one(&self.grid[0, 0, 0], self.grid.shape[1], self.grid.shape[2],
                              self.grid.shape[0], self.ox, self.oy, self.oz, self.h,
                              world[0], world[1], world[2], grad, &cell, &outside)

    cdef double _min_sdf(self, int c) noexcept nogil:
        cdef int m, idx
        cdef double v, best = 1e300
        cdef double g[3]
        cdef double w[3]
        for m in range(self.close_ptr[c], self.close_ptr[c + 1]):
            idx = self.close_pts[m]
            v = self._point_sdf(self.cp_seg[idx], &self.cp_local[idx, 0], g, w)
            if v < best:
                best = v
        return best

    cdef void _close(self, const double* R0, const double* t0, double* d) noexcept nogil:
        cdef int c, j, it
        cdef double lo, hi, mid, nxt, limit, direction
        for c in range(self.C):
            j = self.close_dof[c]
            direction = self.close_dir[c]
            limit = self.close_limit[c]
            self._fk(R0, t0, d)
            if self._min_sdf(c) <= self.eps:
                continue
            lo = d[j]
            while (limit - lo) * direction > 0.0:
                nxt = lo + direction * self.step
                if (limit - nxt) * direction < 0.0:
                    nxt = limit
                d[j] = nxt
                self._fk(R0, t0, d)
                if self._min_sdf(c) <= self.eps:
                    hi = nxt
                    for it in range(self.bisect_iters):
                        mid = 0.5 * (lo + hi)
                        d[j] = mid
                        self._fk(R0, t0, d)
                        if self._min_sdf(c) <= self.eps:
                            hi = mid
                        else:
                            lo = mid
                    d[j] = hi
                    break
                lo = nxt

    cdef double _energy(self, const double* R0, const double* t0, const double* d) noexcept nogil:
        cdef int q, a, s
        cdef double v, gn, align, total = 0.0
        cdef double g[3]
        cdef double w[3]
        cdef double m[3]
        self._fk(R0, t0, d)
        for q in range(self.P):
            v = self._point_sdf(self.cp_seg[q], &self.cp_local[q, 0], g, w)
            if v < -self.cap_depth:
                return self.cap_value
        for q in range(self.Q):
            s = self.site_seg[q]
            v = self._point_sdf(s, &self.site_local[q, 0], g, w)
            for a in range(3):
                m[a] = (self.Rw[s, a, 0] * self.site_normal[q, 0] + self.Rw[s, a, 1] * self.site_normal[q, 1]
                        + self.Rw[s, a, 2] * self.site_normal[q, 2])
            gn = sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
            align = 0.0
            if gn > 0.0:
                align = -(g[0] * m[0] + g[1] * m[1] + g[2] * m[2]) / gn
            if v > 0.0:
                total += v
            total += self.beta * (1.0 - align)
        return total

    def close(self, R, t, d):
        cdef double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
        cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
        cdef double[::1] dv = np.array(d, dtype=np.float64)
        with nogil:
            self._close(&Rv[0, 0], &tv[0], &dv[0] if dv.shape[0] > 0 else NULL)
        return np.asarray(dv)

    def energy(self, R, t, d):
        cdef double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
        cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
        cdef double[::1] dv = np.array(d, dtype=np.float64)
        cdef double e
        with nogil:
            e = self._energy(&Rv[0, 0], &tv[0], &dv[0] if dv.shape[0] > 0 else NULL)
        return e

    def close_and_energy(self, R, t, d):
        cdef double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
        cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
        cdef double[::1] dv = np.array(d, dtype=np.float64)
        cdef double e
        cdef double* dp = &dv[0] if dv.shape[0] > 0 else NULL
        with nogil:
            self._close(&Rv[0, 0], &tv[0], dp)
            e = self._energy(&Rv[0, 0], &tv[0], dp)
        return np.asarray(dv), e
