# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fixed-step RK4 kernel for piecewise-linear circuits.

Same signature and semantics as ``ppdn._kernel_py.run_segment``.
"""

from libc.math cimport isfinite
from libc.stdlib cimport malloc, free

DEF STATUS_OK = 0
DEF STATUS_CROSSED = 1
DEF STATUS_NONFINITE = 2


cdef inline void _deriv(const double[:, ::1] A, const double[::1] b, double* y,
                        double* out, Py_ssize_t nx) nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(nx):
        acc = b[i]
        for j in range(nx):
            acc += A[i, j] * y[j]
        out[i] = acc


cdef inline void _powers(const long[::1] chan, const long[::1] pw, const double[::1] w,
                         const double[:, ::1] a, const double[::1] c0, double* y,
                         double* out, double scale, Py_ssize_t nx, Py_ssize_t nt) nogil:
    cdef Py_ssize_t t, j
    cdef double lin
    for t in range(nt):
        lin = c0[t]
        for j in range(nx):
            lin += a[t, j] * y[j]
        if pw[t] == 2:
            lin = lin * lin
        out[chan[t]] += scale * w[t] * lin


def run_segment(const double[:, ::1] A, const double[::1] b,
                const long[::1] chan, const long[::1] pw, const double[::1] w,
                const double[:, ::1] a, const double[::1] c0,
                double[::1] x, double h, Py_ssize_t n, const long[::1] watch, out):
    cdef Py_ssize_t nx = A.shape[0]
    cdef Py_ssize_t nch = x.shape[0] - nx
    cdef Py_ssize_t nt = w.shape[0]
    cdef Py_ssize_t i, k = 0
    cdef int status = STATUS_OK
    cdef double theta = -1.0
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef double prev, cur, frac
    cdef Py_ssize_t m, idx, which = -1
    cdef Py_ssize_t nwatch = watch.shape[0]
    cdef bint record = out is not None
    cdef double[:, ::1] rec
    if record:
        rec = out

    cdef double* buf = <double*> malloc(sizeof(double) * (7 * nx + nch))
    if buf == NULL:
        raise MemoryError()
    cdef double* s = buf
    cdef double* y = buf + nx
    cdef double* k1 = buf + 2 * nx
    cdef double* k2 = buf + 3 * nx
    cdef double* k3 = buf + 4 * nx
    cdef double* k4 = buf + 5 * nx
    cdef double* nw = buf + 6 * nx
    cdef double* dacc = buf + 7 * nx
    cdef bint ok

    try:
        with nogil:
            for i in range(nx):
                s[i] = x[i]
            while k < n:
                for i in range(nch):
                    dacc[i] = 0.0
                _deriv(A, b, s, k1, nx)
                _powers(chan, pw, w, a, c0, s, dacc, 1.0, nx, nt)
                for i in range(nx):
                    y[i] = s[i] + half * k1[i]
                _deriv(A, b, y, k2, nx)
                _powers(chan, pw, w, a, c0, y, dacc, 2.0, nx, nt)
                for i in range(nx):
                    y[i] = s[i] + half * k2[i]
                _deriv(A, b, y, k3, nx)
                _powers(chan, pw, w, a, c0, y, dacc, 2.0, nx, nt)
                for i in range(nx):
                    y[i] = s[i] + h * k3[i]
                _deriv(A, b, y, k4, nx)
                _powers(chan, pw, w, a, c0, y, dacc, 1.0, nx, nt)
                ok = True
                for i in range(nx):
                    nw[i] = s[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    if not isfinite(nw[i]):
                        ok = False
                if not ok:
                    status = STATUS_NONFINITE
                    break
                for m in range(nwatch):
                    idx = watch[m]
                    prev = s[idx]
                    cur = nw[idx]
                    if prev != 0.0 and prev * cur <= 0.0:
                        frac = prev / (prev - cur)
                        if status != STATUS_CROSSED or frac < theta:
                            status = STATUS_CROSSED
                            theta = frac
                            which = idx
                if status == STATUS_CROSSED:
                    break
                for i in range(nch):
                    x[nx + i] += sixth * dacc[i]
                for i in range(nx):
                    s[i] = nw[i]
                if record:
                    for i in range(nx):
                        rec[k, i] = s[i]
                k += 1
            for i in range(nx):
                x[i] = s[i]
    finally:
        free(buf)
    return k, status, theta, which


def backend_name():
    return "cython"
