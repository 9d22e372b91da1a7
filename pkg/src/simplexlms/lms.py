"""Centralized adaptive filter on edge streams and its steady-state theory.

The update is the stochastic-gradient step

    h(n+1) = h(n) + mu * X(n)^T D(n) (y(n) - X(n) h(n))

whose error recursion is governed by Q = I - mu * c_X. Mean stability
requires mu < 2 / lambda_max(c_X); under the small-step approximation
F ~= Q^T (x) Q^T the weighted deviation converges to

    mu^2 * vec(g)^T (I - F)^{-1} vec(I),

which expands to (mu/2) Tr(g c_X^{-1}) plus a second-order remainder.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .complexes import SimplicialComplex2, hodge_laplacians
from .errors import DivergenceError, StabilityError
from .signals import (
    FilterCoeffs,
    StreamConfig,
    generate_stream,
    moments_closed_form,
    regressor_tensor,
)

__all__ = [
    "LmsState",
    "TheoryReport",
    "ExperimentResult",
    "lms_step",
    "max_stepsize",
    "steady_state_msd",
    "convergence_rate",
    "theory_report",
    "run_experiment",
    "to_db",
    "tail_average",
    "derived_seeds",
]

# Largest coefficient dimension for which the Kronecker operator is
# materialised; beyond it the fixed-point (Stein) solve is used.
_KRON_LIMIT = 16


def to_db(value) -> np.ndarray:
    """Deviation in decibels, 10*log10(value)."""
    return 10.0 * np.log10(np.asarray(value, dtype=np.float64))


def tail_average(trajectory: np.ndarray, fraction: float = 0.1) -> float:
    """Mean of the final ``fraction`` of a trajectory (steady-state probe)."""
    trajectory = np.asarray(trajectory, dtype=np.float64)
    count = max(1, int(round(fraction * trajectory.size)))
    return float(np.mean(trajectory[-count:]))


def derived_seeds(master_seed: int, count: int) -> list[int]:
    """Deterministic per-realization seeds from one master seed."""
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(count)]


@dataclass
class LmsState:
    """Coefficient estimate, step-size, and iteration counter."""

    h: np.ndarray
    mu: float
    n: int = 0


def lms_step(state: LmsState, X: np.ndarray, d: np.ndarray, y: np.ndarray) -> LmsState:
    """One masked stochastic-gradient update; pure function of its inputs."""
    h = state.h
    if X.shape[1] != h.shape[0] or X.shape[0] != d.shape[0] or d.shape != y.shape:
        raise ValueError(
            f"inconsistent shapes: X {X.shape}, d {d.shape}, y {y.shape}, h {h.shape}"
        )
    residual = d * (y - X @ h)
    h_new = h + state.mu * (X.T @ residual)
    if not np.all(np.isfinite(h_new)):
        raise DivergenceError(f"non-finite estimate at iteration {state.n + 1}")
    return LmsState(h=h_new, mu=state.mu, n=state.n + 1)


def max_stepsize(c_X: np.ndarray) -> float:
    """Mean-stability bound 2 / lambda_max of the regressor moment."""
    c_X = np.asarray(c_X, dtype=np.float64)
    lam_max = float(np.linalg.eigvalsh(c_X)[-1])
    if lam_max <= 0:
        raise ValueError("regressor moment matrix must be nonzero PSD")
    return 2.0 / lam_max


def _steady_state_weight(Q: np.ndarray) -> np.ndarray:
    """Solve vec(S) = (I - Q^T (x) Q^T)^{-1} vec(I) for the weight matrix S."""
    dim = Q.shape[0]
    if dim <= _KRON_LIMIT:
        F = np.kron(Q.T, Q.T)
        s = np.linalg.solve(np.eye(dim * dim) - F, np.eye(dim).reshape(-1, order="F"))
        return s.reshape((dim, dim), order="F")
    # S = Q^T S Q + I, solvable because rho(Q) < 1
    return scipy.linalg.solve_discrete_lyapunov(Q.T, np.eye(dim))


def steady_state_msd(c_X: np.ndarray, g: np.ndarray, mu: float) -> tuple[float, float]:
    """Limiting deviation: the Kronecker-operator value and its first-order term.

    Returns ``(msd_exact, msd_first_order)`` where the first order term is
    (mu/2) Tr(g c_X^{-1}). Raises :class:`StabilityError` when the
    step-size is not mean-stable for the given moment matrix.
    """
    c_X = np.asarray(c_X, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    dim = c_X.shape[0]
    Q = np.eye(dim) - mu * c_X
    rho = float(np.max(np.abs(np.linalg.eigvalsh(Q))))
    if mu <= 0 or rho >= 1.0:
        raise StabilityError(
            f"step-size {mu} is unstable: spectral radius {rho:.6f} >= 1"
        )
    S = _steady_state_weight(Q)
    msd_exact = float(mu**2 * np.trace(g @ S))
    msd_first = float(0.5 * mu * np.trace(np.linalg.solve(c_X, g)))
    return msd_exact, msd_first


def convergence_rate(c_X: np.ndarray, mu: float) -> tuple[float, float]:
    """Small-step rate estimate and the exact operator norm.

    Returns ``(1 - 2 mu lambda_min, ||F||_2)`` with
    ``||F||_2 = max((1 - mu lambda_min)^2, (1 - mu lambda_max)^2)``. The
    estimate is only meaningful well below 2*lambda_min/lambda_max^2; a
    warning is issued past that point.
    """
    c_X = np.asarray(c_X, dtype=np.float64)
    lam = np.linalg.eigvalsh(c_X)
    delta, nu = float(lam[0]), float(lam[-1])
    if nu > 0 and mu >= 2.0 * delta / nu**2:
        warnings.warn(
            "step-size exceeds 2*lambda_min/lambda_max^2; the linear rate "
            "approximation is unreliable here",
            stacklevel=2,
        )
    approx = 1.0 - 2.0 * mu * delta
    f_norm = max((1.0 - mu * delta) ** 2, (1.0 - mu * nu) ** 2)
    return approx, f_norm


@dataclass
class TheoryReport:
    """Closed-form predictions for one (c_X, g, mu) configuration."""

    mu: float
    mu_max: float
    rho_Q: float
    msd_exact: float
    msd_first_order: float
    alpha: float
    f_norm: float

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "mu_max": self.mu_max,
            "rho_Q": self.rho_Q,
            "msd_exact": self.msd_exact,
            "msd_exact_db": float(to_db(self.msd_exact)) if self.msd_exact > 0 else None,
            "msd_first_order": self.msd_first_order,
            "alpha": self.alpha,
            "f_norm": self.f_norm,
        }


def theory_report(c_X: np.ndarray, g: np.ndarray, mu: float) -> TheoryReport:
    c_X = np.asarray(c_X, dtype=np.float64)
    lam = np.linalg.eigvalsh(c_X)
    rho_Q = float(np.max(np.abs(1.0 - mu * lam)))
    msd_exact, msd_first = steady_state_msd(c_X, g, mu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        alpha, f_norm = convergence_rate(c_X, mu)
    return TheoryReport(
        mu=mu,
        mu_max=max_stepsize(c_X),
        rho_Q=rho_Q,
        msd_exact=msd_exact,
        msd_first_order=msd_first,
        alpha=alpha,
        f_norm=f_norm,
    )


@dataclass
class ExperimentResult:
    """Averaged deviation trajectory plus the matching theory report."""

    msd: np.ndarray
    theory: TheoryReport | None
    realizations: int
    diverged: list[int]

    @property
    def msd_db(self) -> np.ndarray:
        return to_db(self.msd)

    def steady_state_db(self, fraction: float = 0.1) -> float:
        return float(to_db(tail_average(self.msd, fraction)))


def run_experiment(
    complex_: SimplicialComplex2,
    coeffs: FilterCoeffs,
    cfg: StreamConfig,
    mu: float,
    realizations: int,
    horizon: int,
    h0: np.ndarray | None = None,
) -> ExperimentResult:
    """Monte-Carlo deviation trajectory of the adaptive filter.

    Each realization draws an independent stream from a seed derived
    from ``cfg.seed``; trajectories of diverged realizations are dropped
    and their indices reported. The trajectory has ``horizon + 1``
    entries starting at the initial deviation.
    """
    ops = hodge_laplacians(complex_)
    order = coeffs.order
    h_true = coeffs.flatten()
    dim = h_true.size

    moments = moments_closed_form(ops, cfg.p, cfg.c_x, cfg.sigma_v2, order, coeffs)
    theory: TheoryReport | None
    try:
        theory = theory_report(moments.c_X, moments.g, mu)
    except (StabilityError, ValueError):
        theory = None
        warnings.warn("step-size fails the mean-stability bound; no theory report",
                      stacklevel=2)

    seeds = derived_seeds(cfg.seed, realizations)
    total = np.zeros(horizon + 1)
    diverged: list[int] = []
    kept = 0
    for r in range(realizations):
        state = LmsState(h=np.zeros(dim) if h0 is None else np.array(h0, dtype=np.float64),
                         mu=mu)
        traj = np.empty(horizon + 1)
        traj[0] = float(np.sum((h_true - state.h) ** 2))
        if horizon == 0:
            total += traj
            kept += 1
            continue
        run_cfg = replace(cfg, horizon=horizon + order, seed=seeds[r])
        batch = generate_stream(coeffs, None, run_cfg, ops=ops)
        R = regressor_tensor(batch.x, ops, order)
        try:
            for k in range(horizon):
                n = order + k
                state = lms_step(state, R[n], batch.d[n], batch.y[n])
                traj[k + 1] = float(np.sum((h_true - state.h) ** 2))
        except DivergenceError:
            diverged.append(r)
            continue
        total += traj
        kept += 1
    if kept == 0:
        raise DivergenceError("all realizations diverged")
    return ExperimentResult(
        msd=total / kept,
        theory=theory,
        realizations=kept,
        diverged=diverged,
    )
