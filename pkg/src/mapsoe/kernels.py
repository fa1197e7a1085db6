"""
Numerical kernels for finite continuous-time Markov chains.

All functions are pure and operate on small dense ``numpy`` arrays:
matrix exponentials, stationary distributions, (transient) deviation
matrices and Van Loan block-exponential convolution integrals.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import NumericalError, StructuralError, ValidationError
from .tolerances import VALIDATION_TOL


def as_square(M, name="matrix") -> np.ndarray:
    """Return ``M`` as a finite float square matrix or raise ValidationError."""
    A = np.array(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    return A


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            queue.append(j)
    return seen


def is_irreducible(Q) -> bool:
    """True when the off-diagonal nonzero pattern of ``Q`` is strongly connected."""
    Q = np.asarray(Q)
    p = Q.shape[0]
    if p == 1:
        return True
    adj = (Q != 0) & ~np.eye(p, dtype=bool)
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def generator_problems(Q) -> list[str]:
    """List the ways in which ``Q`` fails to be an irreducible generator."""
    Q = np.asarray(Q, dtype=float)
    p = Q.shape[0]
    scale = max(1.0, float(np.max(np.abs(Q)))) if Q.size else 1.0
    problems = []
    off = ~np.eye(p, dtype=bool)
    if np.any(Q[off] < 0):
        problems.append("negative off-diagonal rate")
    rows = Q.sum(axis=1)
    if np.any(np.abs(rows) > VALIDATION_TOL * scale * p):
        problems.append(f"Q row sum != 0 (max |row sum| = {np.max(np.abs(rows)):.3g})")
    if not is_irreducible(Q):
        problems.append("Q is reducible")
    return problems


def check_generator(Q) -> np.ndarray:
    Q = as_square(Q, "generator")
    problems = generator_problems(Q)
    if "Q is reducible" in problems:
        raise StructuralError("generator is reducible")
    if problems:
        raise ValidationError("; ".join(problems), problems)
    return Q


def matrix_exponential(Q, t: float = 1.0) -> np.ndarray:
    """``exp(Q t)`` for a square matrix and ``t >= 0``.

    Uses the scaling-and-squaring Pade algorithm of :func:`scipy.linalg.expm`.
    """
    Q = as_square(Q)
    if not np.isfinite(t) or t < 0:
        raise ValidationError(f"t must be finite and >= 0, got {t}")
    if t == 0:
        return np.eye(Q.shape[0])
    return expm(Q * t)


def stationary_distribution(Q) -> np.ndarray:
    """Unique ``pi`` with ``pi Q = 0`` and ``pi 1 = 1`` for irreducible ``Q``.

    The last balance equation is replaced by the normalisation and the system
    is solved with an LU factorisation.
    """
    Q = as_square(Q, "generator")
    if not is_irreducible(Q):
        raise StructuralError("stationary distribution requires an irreducible generator")
    p = Q.shape[0]
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(p)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular balance system") from exc
    return pi


@dataclass(frozen=True)
class DeviationMatrices:
    """Deviation matrix ``dev`` (time units) and fundamental matrix ``fundamental``."""

    dev: np.ndarray
    fundamental: np.ndarray
    pi: np.ndarray


def deviation_matrix(Q, pi=None) -> DeviationMatrices:
    """Deviation matrix ``D# = (1 pi - Q)^-1 - 1 pi`` of an irreducible generator."""
    Q = as_square(Q, "generator")
    if pi is None:
        pi = stationary_distribution(Q)
    one_pi = np.outer(np.ones(Q.shape[0]), pi)
    try:
        fund = np.linalg.inv(one_pi - Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("1 pi - Q is singular; is Q an irreducible generator?") from exc
    return DeviationMatrices(dev=fund - one_pi, fundamental=fund, pi=np.asarray(pi))


def transient_deviation_matrix(Q, t: float, dev=None) -> np.ndarray:
    """``D#(t) = integral_0^t (e^{Qu} - 1 pi) du``, evaluated as ``D# (I - e^{Qt})``."""
    Q = as_square(Q, "generator")
    if dev is None:
        dev = deviation_matrix(Q).dev
    if np.isinf(t):
        return dev.copy()
    return dev @ (np.eye(Q.shape[0]) - matrix_exponential(Q, t))


def convolution_integral(Q, M, t: float) -> np.ndarray:
    """``integral_0^t e^{Q(t-s)} M e^{Qs} ds`` via Van Loan's block exponential.

    The integral is the upper-right block of ``exp(A t)`` with
    ``A = [[Q, M], [0, Q]]``.
    """
    Q = as_square(Q)
    M = as_square(M)
    p = Q.shape[0]
    if M.shape != Q.shape:
        raise ValidationError("Q and M must have the same shape")
    A = np.zeros((2 * p, 2 * p))
    A[:p, :p] = Q
    A[p:, p:] = Q
    A[:p, p:] = M
    return matrix_exponential(A, t)[:p, p:]
