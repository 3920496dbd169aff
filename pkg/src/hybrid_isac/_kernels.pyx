# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; see ``_kernels_py`` for the reference numpy versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, M_PI

cnp.import_array()


def angle_spectrum(const double complex[:, ::1] y, Py_ssize_t n_fft):
    """Incoherent spatial spectrum ``sum_s |sum_n y[n, s] e^{-j 2 pi n l / n_fft}|``.

    Uses the lag products of each snapshot so that every bin costs a short
    real dot product and one square root.
    """
    cdef Py_ssize_t n_ant = y.shape[0]
    cdef Py_ssize_t n_snap = y.shape[1]
    cdef Py_ssize_t n_lag = n_ant - 1
    if n_fft < n_ant:
        raise ValueError("n_fft must be >= number of antennas")
    out_arr = np.zeros(n_fft, dtype=np.float64)
    cdef double[::1] out = out_arr
    if n_snap == 0:
        return out_arr
    # trig[l, 2*(lag-1)] = cos(w lag), trig[l, 2*(lag-1)+1] = sin(w lag)
    trig_arr = np.empty((n_fft, 2 * n_lag if n_lag > 0 else 1), dtype=np.float64)
    cdef double[:, ::1] trig = trig_arr
    cdef Py_ssize_t l, s, n, lag
    cdef double w
    for l in range(n_fft):
        w = 2.0 * M_PI * l / n_fft
        for lag in range(1, n_ant):
            trig[l, 2 * (lag - 1)] = cos(w * lag)
            trig[l, 2 * (lag - 1) + 1] = sin(w * lag)
    # lag products stored lag-major so the per-bin loop over snapshots is contiguous
    lag_arr = np.zeros((2 * n_lag if n_lag > 0 else 1, n_snap), dtype=np.float64)
    r0_arr = np.zeros(n_snap, dtype=np.float64)
    cdef double[:, ::1] lagp = lag_arr
    cdef double[::1] r0 = r0_arr
    cdef double re, im, acc, total, c0
    cdef double complex prod
    for s in range(n_snap):
        acc = 0.0
        for n in range(n_ant):
            acc += y[n, s].real * y[n, s].real + y[n, s].imag * y[n, s].imag
        r0[s] = acc
        for lag in range(1, n_ant):
            re = 0.0
            im = 0.0
            for n in range(n_ant - lag):
                prod = y[n + lag, s] * y[n, s].conjugate()
                re += prod.real
                im += prod.imag
            # |p|^2 = r0 + 2 sum_lag Re(R_lag e^{-j w lag})
            lagp[2 * (lag - 1), s] = 2.0 * re
            lagp[2 * (lag - 1) + 1, s] = 2.0 * im
    cdef double[::1] row = np.empty(n_snap, dtype=np.float64)
    for l in range(n_fft):
        for s in range(n_snap):
            row[s] = r0[s]
        for lag in range(2 * n_lag):
            c0 = trig[l, lag]
            for s in range(n_snap):
                row[s] += lagp[lag, s] * c0
        total = 0.0
        for s in range(n_snap):
            acc = row[s]
            if acc < 0.0:
                acc = 0.0
            total += sqrt(acc)
        out[l] = total
    return out_arr
