# cython: language_level=3
"""Compiled gather/scatter kernels behind :mod:`srepnet.autodiff.kernels`.

Both kernels visit kernel offsets in the same lexicographic order as the numpy
fallback, so results are bit-identical between backends.  Column buffers are
handled with merged axes, ``(B, C, kx*ky*kz, ox*oy*oz)``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col3d(const double[:, :, :, :, ::1] xp, int kx, int ky, int kz, int stride,
             int ox, int oy, int oz):
    cdef Py_ssize_t nb = xp.shape[0], nc = xp.shape[1]
    cols_arr = np.empty((nb, nc, kx * ky * kz, ox * oy * oz), dtype=np.float64)
    cdef double[:, :, :, ::1] cols = cols_arr
    cdef Py_ssize_t b, c, dx, dy, dz, i, j, k, off, pos
    with nogil:
        for b in range(nb):
            for c in range(nc):
                off = 0
                for dx in range(kx):
                    for dy in range(ky):
                        for dz in range(kz):
                            pos = 0
                            for i in range(ox):
                                for j in range(oy):
                                    for k in range(oz):
                                        cols[b, c, off, pos] = \
                                            xp[b, c, i * stride + dx, j * stride + dy, k * stride + dz]
                                        pos += 1
                            off += 1
    return cols_arr.reshape((nb, nc, kx, ky, kz, ox, oy, oz))


def col2im3d(cols_in, int px, int py, int pz, int stride):
    cdef Py_ssize_t nb, nc, kx, ky, kz, ox, oy, oz
    nb, nc, kx, ky, kz, ox, oy, oz = cols_in.shape
    cdef const double[:, :, :, ::1] cols = np.ascontiguousarray(
        cols_in, dtype=np.float64).reshape((nb, nc, kx * ky * kz, ox * oy * oz))
    out_arr = np.zeros((nb, nc, px, py, pz), dtype=np.float64)
    cdef double[:, :, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, c, dx, dy, dz, i, j, k, off, pos
    with nogil:
        for b in range(nb):
            for c in range(nc):
                off = 0
                for dx in range(kx):
                    for dy in range(ky):
                        for dz in range(kz):
                            pos = 0
                            for i in range(ox):
                                for j in range(oy):
                                    for k in range(oz):
                                        out[b, c, i * stride + dx, j * stride + dy, k * stride + dz] += \
                                            cols[b, c, off, pos]
                                        pos += 1
                            off += 1
    return out_arr
