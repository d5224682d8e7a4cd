# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled trajectory kernel; same contract as ``_pykernel.advance``.

Loops trajectory by trajectory so the working set stays in cache, and
releases the GIL so batches can run on several threads (OpenMP when the
extension was built with it).
"""

from cython.parallel cimport prange
from libc.stdlib cimport malloc, free
from libc.math cimport isfinite, sqrt

ctypedef double complex cplx

cdef enum:
    MIDPOINT = 0


cdef inline double cabs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef int run_one(cplx* alpha, cplx* beta, const double* noise, int n_steps, int m,
                 double dt, const double* diag, double off, double u, double s,
                 const double* sx, int iterations, int scheme, double thr2,
                 cplx* am, cplx* bm, cplx* ta, cplx* tb) noexcept nogil:
    cdef int k, i, it
    cdef const double* dw
    cdef cplx ha, hb, w, meas, na, nb
    cdef cplx I = 1j
    cdef cplx sa = s * (1.0 - 1j)
    cdef cplx sb = s * (1.0 + 1j)
    cdef double half = 0.5 * dt
    cdef double dwm, kx2
    cdef double ar, ai, br, bi, har, hai, hbr, hbi, wr, wi, xr, xi, yr, yi
    cdef double phi, ga, gb, cr, ci, dr, di
    cdef cplx* tmp
    for k in range(n_steps):
        dw = noise + k * (2 * m + 1)
        dwm = dw[2 * m]
        if scheme == MIDPOINT:
            for i in range(m):
                am[i] = alpha[i]
                bm[i] = beta[i]
            for it in range(iterations):
                for i in range(m):
                    # complex arithmetic spelled out; ~3x faster than C99 complex
                    ar = am[i].real; ai = am[i].imag
                    br = bm[i].real; bi = bm[i].imag
                    har = diag[i] * ar; hai = diag[i] * ai
                    hbr = diag[i] * br; hbi = diag[i] * bi
                    if i > 0:
                        har = har + off * am[i - 1].real; hai = hai + off * am[i - 1].imag
                        hbr = hbr + off * bm[i - 1].real; hbi = hbi + off * bm[i - 1].imag
                    if i < m - 1:
                        har = har + off * am[i + 1].real; hai = hai + off * am[i + 1].imag
                        hbr = hbr + off * bm[i + 1].real; hbi = hbi + off * bm[i + 1].imag
                    # w = u (a b - 1/2)
                    wr = u * (ar * br - ai * bi - 0.5)
                    wi = u * (ar * bi + ai * br)
                    # drift_a = -i (h_a + w a), drift_b = +i (h_b + w b)
                    xr = har + wr * ar - wi * ai
                    xi = hai + wr * ai + wi * ar
                    yr = hbr + wr * br - wi * bi
                    yi = hbi + wr * bi + wi * br
                    phi = sx[i] * dwm
                    ga = s * dw[i]
                    gb = s * dw[m + i]
                    # noise_a = (ga (1 - i) + i phi) a, noise_b = (gb (1 + i) - i phi) b
                    cr = ga; ci = phi - ga
                    dr = gb; di = gb - phi
                    ta[i].real = alpha[i].real + half * xi + 0.5 * (cr * ar - ci * ai)
                    ta[i].imag = alpha[i].imag - half * xr + 0.5 * (cr * ai + ci * ar)
                    tb[i].real = beta[i].real - half * yi + 0.5 * (dr * br - di * bi)
                    tb[i].imag = beta[i].imag + half * yr + 0.5 * (dr * bi + di * br)
                tmp = am; am = ta; ta = tmp
                tmp = bm; bm = tb; tb = tmp
            for i in range(m):
                alpha[i] = 2.0 * am[i] - alpha[i]
                beta[i] = 2.0 * bm[i] - beta[i]
        else:
            for i in range(m):
                ha = diag[i] * alpha[i]
                hb = diag[i] * beta[i]
                if i > 0:
                    ha = ha + off * alpha[i - 1]
                    hb = hb + off * beta[i - 1]
                if i < m - 1:
                    ha = ha + off * alpha[i + 1]
                    hb = hb + off * beta[i + 1]
                w = u * alpha[i] * beta[i]
                kx2 = 0.5 * sx[i] * sx[i]
                meas = I * sx[i] * dwm
                ta[i] = alpha[i] + dt * ((-I) * (ha + w * alpha[i]) - kx2 * alpha[i]) \
                    + sa * alpha[i] * dw[i] + meas * alpha[i]
                tb[i] = beta[i] + dt * (I * (hb + w * beta[i]) - kx2 * beta[i]) \
                    + sb * beta[i] * dw[m + i] - meas * beta[i]
            for i in range(m):
                alpha[i] = ta[i]
                beta[i] = tb[i]
        for i in range(m):
            na = alpha[i] * beta[i]
            if not (cabs2(na) <= thr2) or not isfinite(na.real) or not isfinite(na.imag):
                return k
    return -1


def advance(cplx[:, ::1] alpha, cplx[:, ::1] beta, const double[:, :, ::1] noise,
            double dt, const double[::1] diag, double off, double u, double s,
            const double[::1] sx, int iterations=4, int scheme=MIDPOINT,
            double threshold=float("inf"), int n_threads=1):
    cdef Py_ssize_t nb = alpha.shape[0]
    cdef int m = <int>alpha.shape[1]
    cdef int n_steps = <int>noise.shape[1]
    cdef Py_ssize_t b
    cdef int first_traj = -1, first_step = -1, res
    cdef double thr2 = threshold * threshold
    cdef cplx* work
    if noise.shape[0] != nb or noise.shape[2] != 2 * m + 1:
        raise ValueError("noise must have shape (B, K, 2M + 1)")
    if beta.shape[0] != nb or beta.shape[1] != m:
        raise ValueError("alpha and beta shapes differ")
    if n_steps == 0 or nb == 0:
        return -1, -1
    cdef int* status = <int*>malloc(nb * sizeof(int))
    if status == NULL:
        raise MemoryError()
    try:
        with nogil:
            for b in prange(nb, num_threads=max(n_threads, 1), schedule="static"):
                work = <cplx*>malloc(4 * m * sizeof(cplx))
                if work == NULL:
                    status[b] = -2
                else:
                    status[b] = run_one(&alpha[b, 0], &beta[b, 0], &noise[b, 0, 0],
                                        n_steps, m, dt, &diag[0], off, u, s, &sx[0],
                                        iterations, scheme, thr2,
                                        work, work + m, work + 2 * m, work + 3 * m)
                    free(work)
        for b in range(nb):
            res = status[b]
            if res == -2:
                raise MemoryError()
            if res >= 0 and first_traj < 0:
                first_traj = <int>b
                first_step = res
    finally:
        free(status)
    return first_traj, first_step
