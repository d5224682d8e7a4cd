"""Trajectory stepping, ensemble runs and streaming moment accumulation."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import QUARTER_PERIOD, Lattice, PhysicalParams, hopping_bands
from ..gpe import GroundState
from .backend import SCHEMES, get_kernel
from .model import DivergenceError, TrajectoryState, init_coherent
from .rng import NoiseSource

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    n_trajectories: int = 20000
    t_final: float = QUARTER_PERIOD
    seed: int = 0
    implicit_iterations: int = 4
    divergence_threshold: float | None = None  # None -> 1e3 * N
    scheme: str = "midpoint"
    chunk_size: int = 256
    steps_per_block: int = 64
    n_threads: int = 1
    kernel: str | None = None

    def __post_init__(self):
        if not 0 < self.dt <= 1e-2:
            raise ValueError(f"dt must lie in (0, 1e-2], got {self.dt}")
        if self.n_trajectories < 1 or self.chunk_size < 1:
            raise ValueError("n_trajectories and chunk_size must be positive")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.t_final > math.pi:
            warnings.warn(
                f"t_final={self.t_final:.3f} is beyond the window where positive-P "
                "trajectories are expected to stay bounded",
                stacklevel=2,
            )
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {sorted(SCHEMES)}")
        if self.implicit_iterations < 1:
            raise ValueError("implicit_iterations must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(int(math.ceil(self.t_final / self.dt - 1e-9)), 1)

    @property
    def step_size(self) -> float:
        """``dt`` shrunk so that a whole number of steps lands on ``t_final``."""
        return self.t_final / self.n_steps

    def threshold(self, params: PhysicalParams) -> float:
        if self.divergence_threshold is not None:
            return float(self.divergence_threshold)
        return 1e3 * params.n_atoms

    def hashable(self) -> dict:
        """Fields that change trajectory values (trajectory count excluded)."""
        return {
            "dt": self.dt,
            "t_final": self.t_final,
            "seed": self.seed,
            "implicit_iterations": self.implicit_iterations,
            "divergence_threshold": self.divergence_threshold,
            "scheme": self.scheme,
            "chunk_size": self.chunk_size,
        }


class _Coefficients:
    """Per-lattice constants handed to the kernels."""

    def __init__(self, params: PhysicalParams, lattice: Lattice):
        self.diag, self.off = hopping_bands(lattice)
        self.u = params.g1d / lattice.dx
        self.s = math.sqrt(0.5 * self.u)
        self.sx = np.ascontiguousarray(math.sqrt(2.0 * params.kappa_tilde) * lattice.positions)


KICK_WARN = 0.5


def measurement_kick(params: PhysicalParams, lattice: Lattice, dt: float) -> float:
    """Typical largest per-step measurement phase ``sqrt(2 kappa_tilde) |x| sqrt(dt)``.

    The fixed-point midpoint iteration sums a truncated geometric series
    in half of this phase, so steps where it approaches one amplify the
    outer cells and trajectories diverge.
    """
    return math.sqrt(2.0 * params.kappa_tilde * dt) * float(np.max(np.abs(lattice.positions)))


def step(state: TrajectoryState, params: PhysicalParams, lattice: Lattice,
         config: SimConfig, rng: np.random.Generator) -> TrajectoryState:
    """Advance one trajectory by ``config.dt`` with increments drawn from ``rng``."""
    m = lattice.m_cells
    noise = rng.standard_normal((1, 1, 2 * m + 1)) * math.sqrt(config.dt)
    return advance_state(state, params, lattice, config, noise[0])


def advance_state(state, params, lattice, config, noise) -> TrajectoryState:
    """Advance one trajectory through the given ``(K, 2M + 1)`` increments."""
    co = _Coefficients(params, lattice)
    alpha = np.ascontiguousarray(state.alpha[None, :])
    beta = np.ascontiguousarray(state.beta[None, :])
    noise = np.ascontiguousarray(np.asarray(noise, dtype=float)[None])
    kernel = get_kernel(config.kernel)
    bad, k = kernel(alpha, beta, noise, config.dt, co.diag, co.off, co.u, co.s, co.sx,
                    config.implicit_iterations, SCHEMES[config.scheme],
                    config.threshold(params), 1)
    t_new = state.t + noise.shape[1] * config.dt
    if bad >= 0:
        t_bad = state.t + (k + 1) * config.dt
        raise DivergenceError(f"trajectory diverged at t={t_bad:.5f}", [(0, t_bad)])
    return TrajectoryState.from_complex(alpha[0], beta[0], t_new)


@dataclass
class EnsembleAccumulator:
    """Streaming moments over trajectories at one snapshot time.

    The per-trajectory feature vector is ``(Re n_i, Re G_i)`` with
    ``n_i = alpha_i beta_i`` and ``G_i = n_c n_i`` (``c`` the central
    cell); phase-space averages of these equal the normally ordered
    ``<a_i^+ a_i>`` and ``<a_c^+ a_i^+ a_i a_c>``. The running mean and
    the centred sum of outer products of the real features are kept
    (pairwise-merge form), so standard errors of any linear combination
    or ratio can be propagated without cancellation even when the
    ensemble spread is tiny compared with the means.
    """

    t: float
    m_cells: int
    count: int = 0
    mean_re: np.ndarray = None
    m2_re: np.ndarray = None  # sum of (f - mean)(f - mean)^T
    sum_im: np.ndarray = None
    sum_im_sq: np.ndarray = None
    sum_conj: np.ndarray = None  # sum of beta - conj(alpha)
    sum_conj_sq: np.ndarray = None  # sums of Re^2 and Im^2 of the above
    max_conj_dev: float = 0.0
    max_abs_n: float = 0.0

    def __post_init__(self):
        k = 2 * self.m_cells
        m = self.m_cells
        if self.mean_re is None:
            self.mean_re = np.zeros(k)
            self.m2_re = np.zeros((k, k))
            self.sum_im = np.zeros(k)
            self.sum_im_sq = np.zeros(k)
            self.sum_conj = np.zeros(m, dtype=complex)
            self.sum_conj_sq = np.zeros(2 * m)

    @property
    def center(self) -> int | None:
        return self.m_cells // 2 if self.m_cells % 2 else None

    def _combine(self, n_b, mean_b, m2_b):
        n_a = self.count
        n = n_a + n_b
        delta = mean_b - self.mean_re
        self.mean_re = self.mean_re + delta * (n_b / n)
        self.m2_re = self.m2_re + m2_b + np.outer(delta, delta) * (n_a * n_b / n)
        self.count = n

    def add(self, alpha: np.ndarray, beta: np.ndarray) -> None:
        alpha = np.atleast_2d(alpha)
        beta = np.atleast_2d(beta)
        if alpha.shape[0] == 0:
            return
        n = alpha * beta
        c = self.center
        g = n[:, [c]] * n if c is not None else np.zeros_like(n)
        feats = np.concatenate([n, g], axis=1)
        re, im = feats.real, feats.imag
        mu = re.mean(axis=0)
        dev = re - mu
        self._combine(re.shape[0], mu, dev.T @ dev)
        self.sum_im += im.sum(axis=0)
        self.sum_im_sq += (im * im).sum(axis=0)
        d = beta - alpha.conj()
        self.sum_conj += d.sum(axis=0)
        self.sum_conj_sq += np.concatenate([(d.real**2).sum(0), (d.imag**2).sum(0)])
        self.max_conj_dev = max(self.max_conj_dev, float(np.abs(d).max()))
        self.max_abs_n = max(self.max_abs_n, float(np.abs(n).max()))

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        if other.m_cells != self.m_cells or not math.isclose(other.t, self.t):
            raise ValueError("cannot merge accumulators of different snapshots")
        if other.count:
            self._combine(other.count, other.mean_re, other.m2_re)
        for name in ("sum_im", "sum_im_sq", "sum_conj", "sum_conj_sq"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.max_conj_dev = max(self.max_conj_dev, other.max_conj_dev)
        self.max_abs_n = max(self.max_abs_n, other.max_abs_n)
        return self

    # derived statistics

    def _require(self):
        if self.count < 1:
            raise ValueError("empty accumulator")

    def mean(self) -> np.ndarray:
        """Complex means of the features ``(n_i, G_i)``."""
        self._require()
        return self.mean_re + 1j * self.sum_im / self.count

    def covariance(self) -> np.ndarray:
        """Sample covariance of the real features."""
        self._require()
        if self.count < 2:
            return np.zeros_like(self.m2_re)
        return self.m2_re / (self.count - 1)

    def stderr_re(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.covariance()), 0.0) / self.count)

    def stderr_im(self) -> np.ndarray:
        self._require()
        if self.count < 2:
            return np.zeros_like(self.sum_im)
        mu = self.sum_im / self.count
        var = (self.sum_im_sq / self.count - mu**2) * self.count / (self.count - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.count)

    def linear(self, weights: np.ndarray) -> tuple[float, float]:
        """Mean and standard error of ``weights @ Re(features)``."""
        self._require()
        w = np.asarray(weights, dtype=float)
        val = float(w @ self.mean_re)
        var = float(w @ self.covariance() @ w)
        return val, math.sqrt(max(var, 0.0) / self.count)

    def occupation(self):
        """``(Re <n_i>, stderr, Im <n_i>, stderr)``."""
        m = self.m_cells
        mean = self.mean()[:m]
        return mean.real, self.stderr_re()[:m], mean.imag, self.stderr_im()[:m]

    def total_number(self) -> tuple[float, float]:
        m = self.m_cells
        return self.linear(np.concatenate([np.ones(m), np.zeros(m)]))

    def conjugate_asymmetry(self):
        """Mean of ``beta - alpha*`` per cell and its standard error (complex)."""
        self._require()
        mu = self.sum_conj / self.count
        m = self.m_cells
        n = self.count
        if n < 2:
            return mu, np.zeros(m, dtype=complex)
        var_re = (self.sum_conj_sq[:m] / n - mu.real**2) * n / (n - 1)
        var_im = (self.sum_conj_sq[m:] / n - mu.imag**2) * n / (n - 1)
        err = np.sqrt(np.maximum(var_re, 0) / n) + 1j * np.sqrt(np.maximum(var_im, 0) / n)
        return mu, err

    def imaginary_purity(self) -> float:
        """``max |Im| / |Re|`` over the density features with non-negligible mean."""
        mean = self.mean()[: self.m_cells]
        big = np.abs(mean.real) > 1e-12 * max(np.abs(mean.real).max(), 1e-300)
        if not big.any():
            return 0.0
        return float(np.max(np.abs(mean.imag[big]) / np.abs(mean.real[big])))

    def reflected(self) -> "EnsembleAccumulator":
        """The accumulator of the mirror-image ensemble ``x -> -x``."""
        m = self.m_cells
        perm = np.concatenate([np.arange(m)[::-1], m + np.arange(m)[::-1]])
        out = EnsembleAccumulator(self.t, m, self.count)
        out.mean_re = self.mean_re[perm].copy()
        out.m2_re = self.m2_re[np.ix_(perm, perm)].copy()
        out.sum_im = self.sum_im[perm].copy()
        out.sum_im_sq = self.sum_im_sq[perm].copy()
        out.sum_conj = self.sum_conj[::-1].copy()
        out.sum_conj_sq = np.concatenate([self.sum_conj_sq[:m][::-1], self.sum_conj_sq[m:][::-1]])
        out.max_conj_dev, out.max_abs_n = self.max_conj_dev, self.max_abs_n
        return out


@dataclass
class EnsembleResult:
    snapshots: list[EnsembleAccumulator]
    lattice: Lattice = field(repr=False)
    params: PhysicalParams = None
    config: SimConfig = None

    def at(self, t: float) -> EnsembleAccumulator:
        for acc in self.snapshots:
            if math.isclose(acc.t, t, rel_tol=0, abs_tol=1e-9):
                return acc
        raise KeyError(f"no snapshot at t={t}")

    @property
    def final(self) -> EnsembleAccumulator:
        return self.snapshots[-1]


def snapshot_steps(snapshot_times, config: SimConfig) -> list[int]:
    """Step indices of the snapshots, rounded to the nearest grid point."""
    steps = []
    h = config.step_size
    for t in snapshot_times:
        if t < 0 or t > config.t_final + 1e-12:
            raise ValueError(f"snapshot time {t} outside [0, t_final={config.t_final}]")
        steps.append(int(round(t / h)))
    if steps != sorted(set(steps)):
        raise ValueError("snapshot times must be strictly increasing")
    return steps


def _run_unit(unit, alpha0, beta0, co, params, config, steps, times, m):
    first, count = unit
    kernel = get_kernel(config.kernel)
    scheme = SCHEMES[config.scheme]
    thr = config.threshold(params)
    h = config.step_size
    src = NoiseSource(config.seed, first, count, 2 * m + 1, h)
    alpha = np.repeat(alpha0[None, :], count, axis=0)
    beta = np.repeat(beta0[None, :], count, axis=0)
    accs = [EnsembleAccumulator(t, m) for t in times]
    cur = 0
    for acc, target in zip(accs, steps):
        while cur < target:
            k = min(config.steps_per_block, target - cur)
            noise = src.draw(k)
            bad, kb = kernel(alpha, beta, noise, h, co.diag, co.off, co.u, co.s,
                             co.sx, config.implicit_iterations, scheme, thr, 1)
            if bad >= 0:
                t_bad = (cur + kb + 1) * h
                raise DivergenceError(
                    f"trajectory {first + bad} diverged at t={t_bad:.5f}",
                    [(first + bad, t_bad)],
                )
            cur += k
        acc.add(alpha, beta)
    return accs


def run_ensemble(gs: GroundState, params: PhysicalParams, lattice: Lattice,
                 config: SimConfig, snapshot_times=None, resume=None, on_unit=None) -> EnsembleResult:
    """Integrate ``config.n_trajectories`` trajectories from the coherent ground state.

    Trajectories are processed in fixed blocks of ``config.chunk_size``;
    each block is an independent unit of work with its own noise streams,
    and block results are merged in block order. Outputs therefore do not
    depend on ``config.n_threads``.

    Snapshots are taken at ``snapshot_times`` and always at ``t_final``.
    ``resume`` takes previously accumulated snapshots (e.g. from a
    checkpoint) covering a whole number of leading blocks; ``on_unit`` is
    called with the merged snapshots after every completed block.
    """
    steps = snapshot_steps(snapshot_times or [], config)
    if not steps or steps[-1] != config.n_steps:
        steps.append(config.n_steps)  # the final time is always reported
    times = [k * config.step_size for k in steps]
    m = lattice.m_cells
    st0 = init_coherent(gs, lattice)
    co = _Coefficients(params, lattice)
    kick = measurement_kick(params, lattice, config.step_size)
    if config.scheme == "midpoint" and kick > KICK_WARN:
        warnings.warn(
            f"measurement phase per step reaches {kick:.2f} at the lattice edge; "
            "reduce dt or the lattice width to avoid divergent trajectories",
            RuntimeWarning, stacklevel=2,
        )

    if resume is not None:
        merged = list(resume)
        done = merged[0].count
        if done % config.chunk_size:
            raise ValueError("resume state does not cover whole blocks")
        if len(merged) != len(times) or any(
            not math.isclose(a.t, t, abs_tol=1e-9) for a, t in zip(merged, times)
        ):
            raise ValueError("resume state has different snapshot times")
    else:
        merged = [EnsembleAccumulator(t, m) for t in times]
        done = 0

    units = [
        (first, min(config.chunk_size, config.n_trajectories - first))
        for first in range(done, config.n_trajectories, config.chunk_size)
    ]
    args = (st0.alpha, st0.beta, co, params, config, steps, times, m)
    events = []

    def absorb(accs):
        for tot, part in zip(merged, accs):
            tot.merge(part)
        if on_unit is not None:
            on_unit(merged)

    if config.n_threads <= 1:
        for unit in units:
            try:
                absorb(_run_unit(unit, *args))
            except DivergenceError as exc:
                events += exc.events
                break
    else:
        with ThreadPoolExecutor(config.n_threads) as pool:
            futures = [pool.submit(_run_unit, unit, *args) for unit in units]
            for fut in futures:
                if events:
                    fut.cancel()
                    continue
                try:
                    absorb(fut.result())
                except DivergenceError as exc:
                    events += exc.events

    if events:
        idx, t_bad = events[0]
        raise DivergenceError(
            f"positive-P run aborted: trajectory {idx} exceeded |n| > "
            f"{config.threshold(params):.3g} at t={t_bad:.5f}",
            events,
        )
    return EnsembleResult(merged, lattice, params, config)
