"""
MAP/M/1 queue as a level-independent quasi-birth-death process.

Level ``n`` is the number of customers in the system, the phase is the
arrival phase. Arrivals (``D``) move one level up, service completions
(rate ``mu``) one level down; level 0 has no service.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MarkovArrivalProcess, asymptotic_rate
from .errors import InstabilityError, NumericalError, PreconditionError, ValidationError

RATE_MATRIX_TOL = 1e-13
MAX_ITER = 10**6


@dataclass(frozen=True)
class QbdBlocks:
    A0: np.ndarray  # up: D
    A1: np.ndarray  # local: C - mu I
    A2: np.ndarray  # down: mu I
    B1: np.ndarray  # level-0 local: C
    mu: float
    arrival_rate: float

    @property
    def utilization(self) -> float:
        return self.arrival_rate / self.mu


@dataclass
class QbdSolution:
    R: np.ndarray
    boundary: np.ndarray
    level1: np.ndarray
    mean_q: float
    var_q: float
    utilization: float

    def level_probability(self, n: int) -> float:
        """``P(L = n)``."""
        if n == 0:
            return float(self.boundary.sum())
        return float(self.level1 @ np.linalg.matrix_power(self.R, n - 1) @ np.ones(self.R.shape[0]))


def build_qbd(m: MarkovArrivalProcess, mu: float) -> QbdBlocks:
    m.require_valid()
    if not mu > 0:
        raise ValidationError(f"service rate must be > 0, got {mu}")
    eye = np.eye(m.order)
    return QbdBlocks(A0=m.D.copy(), A1=m.C - mu * eye, A2=mu * eye, B1=m.C.copy(),
                     mu=float(mu), arrival_rate=asymptotic_rate(m))


def solve_rate_matrix(blocks: QbdBlocks, tol: float = RATE_MATRIX_TOL,
                      max_iter: int = MAX_ITER) -> np.ndarray:
    """Minimal nonnegative solution of ``A0 + R A1 + R^2 A2 = 0``.

    Natural fixed-point iteration ``R <- -(A0 + R^2 A2) A1^-1`` from ``R = 0``.
    """
    if blocks.utilization >= 1:
        raise InstabilityError(f"utilisation {blocks.utilization:.6g} >= 1")
    A1inv = np.linalg.inv(blocks.A1)
    R = np.zeros_like(blocks.A0)
    for _ in range(max_iter):
        R_new = -(blocks.A0 + R @ R @ blocks.A2) @ A1inv
        if np.max(np.abs(R_new - R)) < tol:
            R = R_new
            break
        R = R_new
    else:
        raise NumericalError(f"rate matrix iteration did not converge in {max_iter} steps")
    R = _newton_polish(blocks, R)
    if max(abs(np.linalg.eigvals(R))) >= 1:
        raise InstabilityError("spectral radius of R is not below 1")
    return R


def _newton_polish(blocks: QbdBlocks, R: np.ndarray, steps: int = 2) -> np.ndarray:
    # Near the fixed point the linear iteration contracts slowly when the
    # utilisation is high; a couple of Newton steps recover full precision.
    # Newton correction H solves H (A1 + R A2) + R H A2 = -F(R).
    p = R.shape[0]
    eye = np.eye(p)
    for _ in range(steps):
        F = blocks.A0 + R @ blocks.A1 + R @ R @ blocks.A2
        J = np.kron((blocks.A1 + R @ blocks.A2).T, eye) + np.kron(blocks.A2.T, R)
        try:
            h = np.linalg.solve(J, -F.reshape(-1, order="F"))
        except np.linalg.LinAlgError:
            return R
        R_new = R + h.reshape(p, p, order="F")
        if rate_matrix_residual(blocks, R_new) >= rate_matrix_residual(blocks, R):
            break
        R = R_new
    return R


def rate_matrix_residual(blocks: QbdBlocks, R: np.ndarray) -> float:
    return float(np.max(np.abs(blocks.A0 + R @ blocks.A1 + R @ R @ blocks.A2)))


def queue_length_moments(blocks: QbdBlocks, R: np.ndarray) -> QbdSolution:
    """Stationary mean and variance of the number in system.

    ``pi_n = pi_1 R^(n-1)`` for ``n >= 1``; ``(pi_0, pi_1)`` solve the level-0/1
    balance equations together with
    ``pi_0 1 + pi_1 (I - R)^-1 1 = 1``.
    """
    p = R.shape[0]
    eye = np.eye(p)
    one = np.ones(p)
    try:
        N = np.linalg.inv(eye - R)
    except np.linalg.LinAlgError as exc:
        raise InstabilityError("I - R is singular") from exc
    # [pi0 pi1] @ M = 0, one balance column replaced by the normalisation
    M = np.block([[blocks.B1, blocks.A0],
                  [blocks.A2, blocks.A1 + R @ blocks.A2]])
    M[:, 0] = np.concatenate((one, N @ one))
    rhs = np.zeros(2 * p)
    rhs[0] = 1.0
    try:
        x = np.linalg.solve(M.T, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("boundary equations are singular") from exc
    pi0, pi1 = x[:p], x[p:]
    N2 = N @ N
    mean = float(pi1 @ N2 @ one)
    second = float(pi1 @ (eye + R) @ N2 @ N @ one)
    return QbdSolution(R=R, boundary=pi0, level1=pi1, mean_q=mean,
                       var_q=second - mean * mean, utilization=blocks.utilization)


def solve_queue(m: MarkovArrivalProcess, mu: float | None = None,
                rho: float | None = None) -> QbdSolution:
    """Solve the MAP/M/1 queue for a service rate ``mu`` or a utilisation ``rho``."""
    if (mu is None) == (rho is None):
        raise ValidationError("give exactly one of mu and rho")
    if mu is None:
        if not 0 < rho:
            raise ValidationError("rho must be > 0")
        mu = asymptotic_rate(m) / rho
    blocks = build_qbd(m, mu)
    return queue_length_moments(blocks, solve_rate_matrix(blocks))


def default_rho_grid() -> np.ndarray:
    """0.009, 0.018, ..., 0.891 (99 points)."""
    return 0.009 * np.arange(1, 100)


@dataclass
class SweepRow:
    rho: float
    mu: float
    mean_base: float
    mean_alt: float
    mean_prop_err: float
    var_base: float
    var_alt: float
    var_prop_err: float


def _prop_err(alt, base):
    return abs(alt - base) / base if base != 0 else float("nan")


def workload_sweep(base: MarkovArrivalProcess, alt: MarkovArrivalProcess,
                   rho_grid=None) -> list[SweepRow]:
    """Compare two arrival processes with equal rate over a range of utilisations."""
    lam_b = asymptotic_rate(base)
    lam_a = asymptotic_rate(alt)
    if abs(lam_b - lam_a) > 1e-9 * lam_b:
        raise PreconditionError(f"arrival rates differ ({lam_b:.12g} vs {lam_a:.12g})")
    grid = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise ValidationError("utilisations must lie in (0, 1)")
    rows = []
    for rho in grid:
        mu = lam_b / rho
        sb = solve_queue(base, mu=mu)
        sa = solve_queue(alt, mu=mu)
        rows.append(SweepRow(float(rho), mu, sb.mean_q, sa.mean_q, _prop_err(sa.mean_q, sb.mean_q),
                             sb.var_q, sa.var_q, _prop_err(sa.var_q, sb.var_q)))
    return rows
