"""Pure NumPy trajectory kernel, vectorized over a batch of trajectories.

Same contract as the compiled ``_ckernel.advance``; used when the
extension is not built or ``CMBEC_BACKEND=python`` is set.
"""

import numpy as np

MIDPOINT = 0
EULER = 1


def _hop(z, diag, off):
    h = diag * z
    h[:, 1:] += off * z[:, :-1]
    h[:, :-1] += off * z[:, 1:]
    return h


def _strat_drift(a, b, diag, off, u):
    # measurement drift cancels exactly against its Stratonovich correction
    w = u * (a * b - 0.5)
    return -1j * (_hop(a, diag, off) + w * a), 1j * (_hop(b, diag, off) + w * b)


def _ito_drift(a, b, diag, off, u, kx2):
    w = u * a * b
    return (
        -1j * (_hop(a, diag, off) + w * a) - kx2 * a,
        1j * (_hop(b, diag, off) + w * b) - kx2 * b,
    )


def _noise(a, b, dwa, dwb, dwm, s, sx):
    meas = 1j * sx * dwm[:, None]
    return (s * (1 - 1j)) * a * dwa + meas * a, (s * (1 + 1j)) * b * dwb - meas * b


def advance(alpha, beta, noise, dt, diag, off, u, s, sx, iterations=4,
            scheme=MIDPOINT, threshold=np.inf, n_threads=1):
    """Integrate every trajectory in the batch over ``noise.shape[1]`` steps, in place.

    Parameters
    ----------
    alpha, beta : complex arrays, shape (B, M)
    noise : real array, shape (B, K, 2M + 1)
        Wiener increments already scaled by ``sqrt(dt)``; per step the
        columns are the M alpha increments, the M beta increments and the
        shared measurement increment.
    sx : array, shape (M,)
        ``sqrt(2 kappa_tilde) * x_i``.

    Returns
    -------
    (trajectory, step) of the first trajectory to exceed ``threshold`` in
    any ``|alpha_i beta_i|`` (or become non-finite), or ``(-1, -1)``.
    """
    m = alpha.shape[1]
    kx2 = 0.5 * sx**2
    half = 0.5 * dt
    for k in range(noise.shape[1]):
        dw = noise[:, k, :]
        dwa, dwb, dwm = dw[:, :m], dw[:, m:2 * m], dw[:, 2 * m]
        if scheme == MIDPOINT:
            am, bm = alpha, beta
            for _ in range(iterations):
                fa, fb = _strat_drift(am, bm, diag, off, u)
                ga, gb = _noise(am, bm, dwa, dwb, dwm, s, sx)
                am = alpha + half * fa + 0.5 * ga
                bm = beta + half * fb + 0.5 * gb
            alpha[...] = 2.0 * am - alpha
            beta[...] = 2.0 * bm - beta
        else:
            fa, fb = _ito_drift(alpha, beta, diag, off, u, kx2)
            ga, gb = _noise(alpha, beta, dwa, dwb, dwm, s, sx)
            alpha += dt * fa + ga
            beta += dt * fb + gb
        nabs = np.abs(alpha * beta)
        bad = ~(nabs <= threshold).all(axis=1)
        if bad.any():
            return int(np.flatnonzero(bad)[0]), k
    return -1, -1
