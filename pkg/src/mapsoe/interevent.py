"""
Event-stationary inter-event times of a MAP.

At event epochs the phase forms a DTMC with ``P = (-C)^-1 D``; started from
its stationary law ``alpha`` the inter-event time is ``PH(alpha, C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MarkovArrivalProcess, asymptotic_rate
from .errors import NumericalError

DEFAULT_LAGS = 50


@dataclass(frozen=True)
class EmbeddedChain:
    P: np.ndarray
    alpha: np.ndarray


@dataclass
class InterEventStats:
    moments: list[float]
    scv: float
    autocorr: list[float]


def _neg_c_inverse(m: MarkovArrivalProcess) -> np.ndarray:
    C = m.C
    if np.count_nonzero(C - np.diag(np.diag(C))) == 0:
        return np.diag(-1.0 / np.diag(C))
    try:
        return np.linalg.inv(-C)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("C is singular") from exc


def embedded_chain(m: MarkovArrivalProcess) -> EmbeddedChain:
    """Phase chain at event epochs and its stationary distribution."""
    m.require_valid()
    P = _neg_c_inverse(m) @ m.D
    p = m.order
    A = P.T - np.eye(p)
    A[-1, :] = 1.0
    b = np.zeros(p)
    b[-1] = 1.0
    try:
        alpha = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("embedded chain has no unique stationary law") from exc
    return EmbeddedChain(P=P, alpha=alpha)


def interevent_moment(m: MarkovArrivalProcess, k: int) -> float:
    """``M_k = k! alpha (-C)^-k 1``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    alpha = embedded_chain(m).alpha
    Ninv = _neg_c_inverse(m)
    v = np.ones(m.order)
    for _ in range(k):
        v = Ninv @ v
    return math.factorial(k) * float(alpha @ v)


def interevent_moment_from_rate(m: MarkovArrivalProcess, k: int) -> float:
    """Same moment through the time-stationary law: ``(-1)^(k+1) k! pi (C^-1)^(k-1) 1 / lambda*``."""
    Cinv = np.linalg.inv(m.C)
    v = np.ones(m.order)
    for _ in range(k - 1):
        v = Cinv @ v
    return (-1) ** (k + 1) * math.factorial(k) * float(m.pi @ v) / asymptotic_rate(m)


def scv(m: MarkovArrivalProcess) -> float:
    """Squared coefficient of variation ``c^2 = (M2 - M1^2) / M1^2``."""
    m1 = interevent_moment(m, 1)
    m2 = interevent_moment(m, 2)
    return (m2 - m1 * m1) / (m1 * m1)


def joint_moment(m: MarkovArrivalProcess, k: int, l: int, lag: int) -> float:
    """``E[T_i^k T_{i+lag}^l]`` for the event-stationary process."""
    if k < 1 or l < 1 or lag < 1:
        raise ValueError("k, l and lag must all be >= 1")
    chain = embedded_chain(m)
    Ninv = _neg_c_inverse(m)
    left = chain.alpha @ np.linalg.matrix_power(Ninv, k)
    right = np.linalg.matrix_power(Ninv, l) @ np.ones(m.order)
    val = left @ np.linalg.matrix_power(chain.P, lag) @ right
    return math.factorial(k) * math.factorial(l) * float(val)


def autocorrelations(m: MarkovArrivalProcess, n_lags: int = DEFAULT_LAGS) -> np.ndarray:
    """Lag-1..n_lags autocorrelations of the inter-event times."""
    chain = embedded_chain(m)
    Ninv = _neg_c_inverse(m)
    u = chain.alpha @ Ninv
    v = Ninv @ np.ones(m.order)
    m1 = float(u @ np.ones(m.order))
    m2 = 2.0 * float(u @ v)
    var = m2 - m1 * m1
    if not var > 1e-14 * m1 * m1:
        raise NumericalError("inter-event variance is degenerate (M2 == M1^2)")
    out = np.empty(n_lags)
    for j in range(n_lags):
        v = chain.P @ v
        out[j] = u @ v
    return (out - m1 * m1) / var


def lag_autocorrelation(m: MarkovArrivalProcess, j: int) -> float:
    """``rho_j = (E[T_0 T_j] - M1^2) / (M2 - M1^2)``."""
    if j < 1:
        raise ValueError("lag must be >= 1")
    m1 = interevent_moment(m, 1)
    m2 = interevent_moment(m, 2)
    var = m2 - m1 * m1
    if not var > 1e-14 * m1 * m1:
        raise NumericalError("inter-event variance is degenerate (M2 == M1^2)")
    return (joint_moment(m, 1, 1, j) - m1 * m1) / var


def interevent_stats(m: MarkovArrivalProcess, n_moments: int = 3,
                     n_lags: int = DEFAULT_LAGS) -> InterEventStats:
    moments = [interevent_moment(m, k) for k in range(1, n_moments + 1)]
    return InterEventStats(
        moments=moments,
        scv=scv(m),
        autocorr=autocorrelations(m, n_lags).tolist(),
    )
