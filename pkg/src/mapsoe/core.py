"""
The Markovian arrival process model and moments of its counting process.

A MAP of order ``p`` is given by ``(eta, C, D)``: ``C`` holds the phase
transition rates without an event, ``D`` the rates of transitions that
emit an event, and ``Q = C + D`` is the (irreducible) phase generator.
``eta`` is the initial phase law; when omitted the process is taken to be
time-stationary (``eta = pi``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import UnsupportedCaseError, ValidationError
from .tolerances import VALIDATION_TOL


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


@dataclass(frozen=True, eq=False)
class MarkovArrivalProcess:
    """Immutable ``(eta, C, D)`` triple.

    Shapes and finiteness are checked on construction; the sign, row-sum and
    irreducibility invariants are reported by :func:`validate` and enforced
    lazily by the analysis functions.
    """

    C: np.ndarray
    D: np.ndarray
    eta: np.ndarray | None = None
    _validity: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self):
        C = kernels.as_square(self.C, "C")
        D = kernels.as_square(self.D, "D")
        if C.shape != D.shape:
            raise ValidationError(f"C {C.shape} and D {D.shape} differ in shape")
        C.flags.writeable = False
        D.flags.writeable = False
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        if self.eta is not None:
            eta = np.array(self.eta, dtype=float).ravel()
            if eta.shape != (C.shape[0],):
                raise ValidationError(f"eta has length {eta.size}, expected {C.shape[0]}")
            if not np.all(np.isfinite(eta)):
                raise ValidationError("eta has non-finite entries")
            eta.flags.writeable = False
            object.__setattr__(self, "eta", eta)

    @classmethod
    def poisson(cls, rate: float) -> "MarkovArrivalProcess":
        return cls([[-rate]], [[rate]])

    @property
    def order(self) -> int:
        return self.C.shape[0]

    @cached_property
    def Q(self) -> np.ndarray:
        return self.C + self.D

    @cached_property
    def pi(self) -> np.ndarray:
        return kernels.stationary_distribution(self.Q)

    @cached_property
    def deviation(self) -> kernels.DeviationMatrices:
        return kernels.deviation_matrix(self.Q, self.pi)

    @property
    def dev(self) -> np.ndarray:
        return self.deviation.dev

    @cached_property
    def event_rates(self) -> np.ndarray:
        """``D 1``: event intensity out of each phase."""
        return self.D.sum(axis=1)

    @property
    def is_stationary(self) -> bool:
        return self.eta is None or np.allclose(self.eta, self.pi, rtol=0, atol=1e-12)

    def initial(self) -> np.ndarray:
        return self.pi if self.eta is None else self.eta

    def with_eta(self, eta) -> "MarkovArrivalProcess":
        return MarkovArrivalProcess(self.C, self.D, eta)

    def stationary(self) -> "MarkovArrivalProcess":
        return MarkovArrivalProcess(self.C, self.D)

    def require_valid(self) -> "MarkovArrivalProcess":
        """Raise :class:`ValidationError` unless :func:`validate` is clean."""
        if not self._validity:
            self._validity.append(validate(self))
        diags = self._validity[0]
        if diags:
            raise ValidationError("invalid MAP: " + "; ".join(map(str, diags)), diags)
        return self

    def __repr__(self):
        return f"MarkovArrivalProcess(order={self.order}, stationary={self.eta is None})"


def validate(m: MarkovArrivalProcess) -> list[Diagnostic]:
    """Return one diagnostic per violated invariant; empty list means valid."""
    C, D = m.C, m.D
    p = m.order
    out = []
    scale = max(1.0, float(np.max(np.abs(C))), float(np.max(np.abs(D))))
    if np.any(np.diag(C) >= 0):
        out.append(Diagnostic("C-diagonal", "C must have strictly negative diagonal"))
    if np.any(C[~np.eye(p, dtype=bool)] < 0):
        out.append(Diagnostic("negative-rate", "negative off-diagonal no-event rate in C"))
    if np.any(D < 0):
        out.append(Diagnostic("negative-event-rate", "negative event rate in D"))
    if not np.any(D > 0):
        out.append(Diagnostic("no-events", "D is identically zero"))
    Q = C + D
    rows = Q.sum(axis=1)
    worst = float(np.max(np.abs(rows)))
    if worst > VALIDATION_TOL * scale * p:
        out.append(Diagnostic("row-sum", f"Q row sum != 0 (max |row sum| = {worst:.3g})"))
    if not kernels.is_irreducible(Q):
        out.append(Diagnostic("reducible", "Q = C + D is reducible"))
    if m.eta is not None:
        eta = m.eta
        if np.any(eta < 0) or abs(eta.sum() - 1.0) > VALIDATION_TOL * p:
            out.append(Diagnostic("eta", "eta must be a probability vector"))
    return out


def _check_t(t):
    if not np.isfinite(t) or t < 0:
        raise ValidationError(f"t must be finite and >= 0, got {t}")


def asymptotic_rate(m: MarkovArrivalProcess) -> float:
    """Long-run event rate ``lambda* = pi D 1``."""
    m.require_valid()
    return float(m.pi @ m.event_rates)


def count_mean(m: MarkovArrivalProcess, t: float) -> float:
    """``E[N(t)]``; uses ``m.eta`` when the MAP is not time-stationary."""
    m.require_valid()
    _check_t(t)
    lam = asymptotic_rate(m) * t
    if m.is_stationary or t == 0:
        return lam
    dev_t = kernels.transient_deviation_matrix(m.Q, t, m.dev)
    return float(m.eta @ dev_t @ m.event_rates) + lam


def count_variance(m: MarkovArrivalProcess, t: float) -> float:
    """``Var N(t)`` of the time-stationary process.

    For a general initial law only the asymptotic y-intercept is available,
    see :func:`variance_y_intercept`.
    """
    m.require_valid()
    _check_t(t)
    if not m.is_stationary:
        raise UnsupportedCaseError(
            "count variance is only available for the time-stationary MAP; "
            "use variance_y_intercept for a general initial distribution"
        )
    pi, D, d1, dev = m.pi, m.D, m.event_rates, m.dev
    piD = pi @ D
    slope = pi @ d1 + 2.0 * piD @ dev @ d1
    dev_t = kernels.transient_deviation_matrix(m.Q, t, dev)
    return float(slope * t - 2.0 * piD @ dev @ dev_t @ d1)


def _third_factorial_moment(m: MarkovArrivalProcess, t: float) -> float:
    """``E[N(N-1)(N-2)]`` of the stationary process.

    The double integral
    ``6 pi D int_0^t int_0^u e^{Q(u-s)} D (1 pi D 1 s + D#(s) D 1) ds du``
    is reduced, with ``D#(s) = D#(I - e^{Qs})``, to closed-form matrix
    polynomials in ``t`` plus one Van Loan convolution for the cross term.
    """
    if t == 0:
        return 0.0
    p = m.order
    one_pi = np.outer(np.ones(p), m.pi)
    D, d1, dev = m.D, m.event_rates, m.dev
    lam = float(m.pi @ d1)
    piD = m.pi @ D
    E = kernels.matrix_exponential(m.Q, t)
    dev_t = dev @ (np.eye(p) - E)
    # K(t) = int_0^t e^{Qw} dw and L(t) = int_0^t K(u) du
    K = one_pi * t + dev_t
    L = one_pi * t**2 / 2 + dev * t - dev @ dev_t
    int_wE = t * K - L
    int_wK = one_pi * t**3 / 3 + dev * t**2 / 2 - dev @ int_wE
    # int_0^t int_0^u e^{Q(u-s)} s ds du
    poly_term = t * L - int_wK
    M = D @ dev
    conv = kernels.convolution_integral(m.Q, M, t)
    int_conv = one_pi @ M @ L - dev @ conv + dev @ M @ K
    half = lam * (piD @ poly_term @ d1) + piD @ L @ M @ d1 - piD @ int_conv @ d1
    return float(6.0 * half)


def count_third_moment(m: MarkovArrivalProcess, t: float) -> float:
    """Raw third moment ``E[N(t)^3]`` of the time-stationary counting process.

    Built from factorial moments: ``E[N^3] = F3 + 3 F2 + F1`` where
    ``F2 = Var + mean^2 - mean`` and ``F3`` is the third factorial moment.
    """
    m.require_valid()
    _check_t(t)
    if not m.is_stationary:
        raise UnsupportedCaseError("third moment is only available for the time-stationary MAP")
    mean = count_mean(m, t)
    f2 = count_variance(m, t) + mean * mean - mean
    return _third_factorial_moment(m, t) + 3.0 * f2 + mean


def dispersion_limit(m: MarkovArrivalProcess) -> float:
    """Limiting index of dispersion of counts ``d^2 = lim Var N(t) / E N(t)``."""
    m.require_valid()
    lam = asymptotic_rate(m)
    return float(1.0 + 2.0 * (m.pi @ m.D @ m.dev @ m.event_rates) / lam)


def variance_y_intercept(m: MarkovArrivalProcess, eta=None, mean_offset: bool = True) -> float:
    """Intercept ``b`` of the linear asymptote ``Var_eta N(t) ~ a t + b``.

    ``eta`` defaults to ``m.eta`` (or ``pi`` for a stationary MAP). With
    ``a = lambda* d^2`` the intercept is

        -2 pi D D# D# D1 - 2 lambda* eta D#^2 D1 - (eta D# D1)^2
        + 2 eta D# D D# D1 + eta D# D1.

    The last term is the constant offset of ``E_eta N(t)`` and vanishes for
    ``eta = pi``; ``mean_offset=False`` drops it, giving the commonly quoted
    four-term expression.
    """
    m.require_valid()
    eta = m.initial() if eta is None else np.asarray(eta, dtype=float)
    pi, D, d1, dev = m.pi, m.D, m.event_rates, m.dev
    lam = pi @ d1
    dev_d1 = dev @ d1
    offset = float(eta @ dev_d1)
    b = (
        -2.0 * pi @ D @ dev @ dev_d1
        - 2.0 * lam * eta @ dev @ dev_d1
        - offset**2
        + 2.0 * eta @ dev @ D @ dev_d1
    )
    return float(b + offset) if mean_offset else float(b)


@dataclass
class CountMomentReport:
    t_grid: list[float]
    mean: list[float]
    variance: list[float] | None
    third_moment: list[float] | None
    rate: float
    dispersion_limit: float


def count_report(m: MarkovArrivalProcess, t_grid, third: bool = False) -> CountMomentReport:
    """Evaluate counting moments of ``m`` on ``t_grid``.

    Variance and third moment are only filled in for a time-stationary MAP.
    """
    m.require_valid()
    ts = [float(t) for t in t_grid]
    stationary = m.is_stationary
    base = m.stationary()
    return CountMomentReport(
        t_grid=ts,
        mean=[count_mean(m, t) for t in ts],
        variance=[count_variance(base, t) for t in ts] if stationary else None,
        third_moment=[count_third_moment(base, t) for t in ts] if third and stationary else None,
        rate=asymptotic_rate(m),
        dispersion_limit=dispersion_limit(m),
    )
