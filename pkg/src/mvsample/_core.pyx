# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: splat compositing and occupancy ray-marching.

Semantics mirror mvsample._core_py exactly (same formulas, same per-pixel
splat order); this module only removes the interpreter from the inner loops.
Built in place with: python setup_ext.py build_ext --inplace
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor, sqrt

cnp.import_array()

DEF ALPHA_MIN = 0.00392156862745098   # 1/255
DEF ALPHA_CAP = 0.99


def composite_splats(double[:, ::1] means, double[:, ::1] conics,
                     double[::1] depths, double[::1] alphas,
                     double[:, ::1] colors, int[:, ::1] bounds,
                     double[:, :, ::1] out_color, double[:, ::1] out_trans,
                     double[:, ::1] out_depth, int row0, int row1):
    """Front-to-back compositing of pre-sorted splats into rows [row0, row1)."""
    cdef Py_ssize_t n = means.shape[0]
    cdef Py_ssize_t i, x, y
    cdef int x0, x1, y0, y1
    cdef double mx, my, ca, cb, cc, a_i, d_i, cr, cg, cb2
    cdef double dx, dy, q, ap, t, w
    with nogil:
        for i in range(n):
            x0 = bounds[i, 0]
            x1 = bounds[i, 1]
            y0 = bounds[i, 2]
            y1 = bounds[i, 3]
            if y0 < row0:
                y0 = row0
            if y1 > row1:
                y1 = row1
            if y0 >= y1 or x0 >= x1:
                continue
            mx = means[i, 0]
            my = means[i, 1]
            ca = conics[i, 0]
            cb = conics[i, 1]
            cc = conics[i, 2]
            a_i = alphas[i]
            d_i = depths[i]
            cr = colors[i, 0]
            cg = colors[i, 1]
            cb2 = colors[i, 2]
            for y in range(y0, y1):
                dy = (y + 0.5) - my
                for x in range(x0, x1):
                    dx = (x + 0.5) - mx
                    q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                    ap = a_i * exp(-0.5 * q)
                    if ap > ALPHA_CAP:
                        ap = ALPHA_CAP
                    if ap < ALPHA_MIN:
                        continue
                    t = out_trans[y, x]
                    w = ap * t
                    out_color[y, x, 0] += w * cr
                    out_color[y, x, 1] += w * cg
                    out_color[y, x, 2] += w * cb2
                    out_depth[y, x] += d_i * w
                    out_trans[y, x] = t * (1.0 - ap)


def march_visibility(double[::1] origin, double[:, ::1] targets,
                     long[::1] target_idx, unsigned char[::1] occupancy,
                     int res, double step):
    """Visibility of target voxel centers from a camera origin.

    Same sampling rule as the fallback: points at k*step for k >= 1 while
    k*step < distance to the target center; samples inside the target
    voxel never block.
    """
    cdef Py_ssize_t m = targets.shape[0]
    out = np.ones(m, dtype=np.uint8)
    cdef unsigned char[::1] visible = out
    cdef double half_res = res / 2.0
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef Py_ssize_t j
    cdef long k, ix, iy, iz, flat, tgt
    cdef double dx, dy, dz, dist, ux, uy, uz, t, px, py, pz
    with nogil:
        for j in range(m):
            dx = targets[j, 0] - ox
            dy = targets[j, 1] - oy
            dz = targets[j, 2] - oz
            dist = sqrt(dx * dx + dy * dy + dz * dz)
            ux = dx / dist
            uy = dy / dist
            uz = dz / dist
            tgt = target_idx[j]
            k = 1
            t = step
            while t < dist:
                px = ox + t * ux
                py = oy + t * uy
                pz = oz + t * uz
                ix = <long>floor((px + 1.0) * half_res)
                iy = <long>floor((py + 1.0) * half_res)
                iz = <long>floor((pz + 1.0) * half_res)
                if 0 <= ix < res and 0 <= iy < res and 0 <= iz < res:
                    flat = (ix * res + iy) * res + iz
                    if flat != tgt and occupancy[flat] != 0:
                        visible[j] = 0
                        break
                k += 1
                t = k * step
    return out
