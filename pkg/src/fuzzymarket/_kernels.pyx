"""Compiled BCFON update step.

Must stay operation-for-operation identical to ``_purepy.bcfon_step``:
sums run sequentially in index order, starting from the first neighbour.
"""
from libc.math cimport fabs, INFINITY

cdef enum:
    LOCAL = 0
    GLOBAL = 1
    EXTERNAL = 2


def bcfon_step(const double[::1] centers, const double[::1] sdvs,
               const double[::1] radius, int scheme, double signal,
               double b, double floor,
               double[::1] out_centers, double[::1] out_sdvs):
    cdef Py_ssize_t n = centers.shape[0]
    cdef Py_ssize_t i, j, ref, k
    cdef double ci, si, r, dc, ss, cref, sref, acc_c, acc_s, mean_all, nc, ns, u
    cdef bint linked

    with nogil:
        cref = centers[0]
        acc_c = 0.0
        for j in range(n):
            acc_c = acc_c + (centers[j] - cref)
        mean_all = cref + acc_c / n

        for i in range(n):
            ci = centers[i]
            si = sdvs[i]
            r = radius[i]
            k = 0
            ref = -1
            cref = 0.0
            sref = 0.0
            acc_c = 0.0
            acc_s = 0.0
            if r < 0:
                # forced singleton neighbourhood
                k = 1
                cref = ci
                sref = si
            else:
                for j in range(n):
                    if r == INFINITY:
                        linked = True
                    else:
                        dc = ci - centers[j]
                        ss = si + sdvs[j]
                        linked = dc * dc <= r * ss * ss
                    if linked:
                        if ref < 0:
                            ref = j
                            cref = centers[j]
                            sref = sdvs[j]
                        acc_c = acc_c + (centers[j] - cref)
                        acc_s = acc_s + (sdvs[j] - sref)
                        k = k + 1
            nc = cref + acc_c / k
            if scheme == LOCAL:
                u = b * fabs(ci - nc)
            elif scheme == GLOBAL:
                u = b * fabs(ci - mean_all)
            else:
                u = b * fabs(ci - signal)
            ns = sref + acc_s / k + u
            if ns < floor:
                ns = floor
            out_centers[i] = nc
            out_sdvs[i] = ns
