"""Numpy fallback for the BCFON update step.

Mirrors ``_kernels.pyx`` exactly.  ``np.cumsum`` accumulates strictly left
to right, and non-neighbours contribute ``+0.0``, so the rounding matches
the compiled loop bit for bit.
"""
import numpy as np

LOCAL, GLOBAL, EXTERNAL = 0, 1, 2


def bcfon_step(centers, sdvs, radius, scheme, signal, b, floor, out_centers, out_sdvs):
    c = np.asarray(centers, dtype=np.float64)
    s = np.asarray(sdvs, dtype=np.float64)
    r = np.asarray(radius, dtype=np.float64)
    n = c.shape[0]

    mean_all = c[0] + np.cumsum(c - c[0])[-1] / n

    dc = c[:, None] - c[None, :]
    ss = s[:, None] + s[None, :]
    with np.errstate(invalid="ignore"):
        linked = dc * dc <= r[:, None] * ss * ss
    linked[np.isinf(r)] = True
    single = r < 0
    if single.any():
        linked[single] = False
        linked[single, np.flatnonzero(single)] = True

    ref = np.argmax(linked, axis=1)
    cref = c[ref]
    sref = s[ref]
    k = linked.sum(axis=1).astype(np.float64)
    acc_c = np.cumsum(np.where(linked, c[None, :] - cref[:, None], 0.0), axis=1)[:, -1]
    acc_s = np.cumsum(np.where(linked, s[None, :] - sref[:, None], 0.0), axis=1)[:, -1]

    nc = cref + acc_c / k
    if scheme == LOCAL:
        u = b * np.abs(c - nc)
    elif scheme == GLOBAL:
        u = b * np.abs(c - mean_all)
    else:
        u = b * np.abs(c - signal)
    ns = sref + acc_s / k + u
    out_centers[:] = nc
    out_sdvs[:] = np.maximum(ns, floor)
