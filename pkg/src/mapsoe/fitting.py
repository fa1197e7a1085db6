"""
Fit an MTCP of order 4 to inter-event moments and autocorrelations.

The model is parameterised by the 12 off-diagonal entries ``x`` of its event
matrix ``D`` (row-major), with ``C = diag(-D 1)``. The objective is the sum
of squared autocorrelation errors over lags ``1..n_lags``; ``M1``, ``c^2``,
``M3`` and the autocorrelations at ``constrained_lags`` are equality
constraints with a common tolerance.

Optimisation runs in ``log x``. ``M1`` is matched exactly by rescaling ``x``
(autocorrelations and ``c^2`` are invariant under ``x -> a x``, ``M3``
scales as ``a^-3``), the remaining constraints go through an augmented
Lagrangian whose subproblems are solved by Nelder-Mead. Several random
starts are run and the best feasible one is kept.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import MarkovArrivalProcess, validate
from .errors import InfeasibleFitError, ValidationError
from .interevent import DEFAULT_LAGS, autocorrelations, interevent_moment, scv

log = logging.getLogger(__name__)

N_PARAMS = 12
_OFF = ~np.eye(4, dtype=bool)
_PENALTY = 1e6


@dataclass
class FitTargets:
    M1: float
    c2: float
    M3: float
    rho: np.ndarray
    constrained_lags: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.constrained_lags = tuple(int(j) for j in self.constrained_lags)
        if not self.M1 > 0 or not self.c2 > 0:
            raise ValidationError("targets need M1 > 0 and c2 > 0")
        if not np.all(np.isfinite(self.rho)):
            raise ValidationError("target autocorrelations must be finite")
        if any(j < 1 or j > self.rho.size for j in self.constrained_lags):
            raise ValidationError("constrained lag outside the available autocorrelations")

    def to_dict(self) -> dict:
        return {"M1": self.M1, "c2": self.c2, "M3": self.M3, "rho": self.rho.tolist(),
                "constrained_lags": list(self.constrained_lags)}

    @classmethod
    def from_dict(cls, d: dict) -> "FitTargets":
        return cls(float(d["M1"]), float(d["c2"]), float(d["M3"]), d["rho"],
                   tuple(d.get("constrained_lags", (1, 2, 3))))


@dataclass
class FitProblem:
    targets: FitTargets
    n_lags: int = DEFAULT_LAGS
    constraint_tol: float = 1e-6
    multistart: int = 64
    seed: int = 0
    x_min: float = 1e-6
    x_max: float = 1e6
    init_range: tuple[float, float] = (0.1, 100.0)
    max_outer: int = 30
    inner_maxfev: int = 20000

    def __post_init__(self):
        if self.multistart < 1:
            raise ValidationError("multistart must be >= 1")
        if self.n_lags < max(self.targets.constrained_lags, default=0):
            raise ValidationError("n_lags must cover every constrained lag")
        if self.targets.rho.size < self.n_lags:
            raise ValidationError(f"targets provide {self.targets.rho.size} lags, need {self.n_lags}")


@dataclass
class FitResult:
    mtcp: MarkovArrivalProcess
    x: np.ndarray
    objective: float
    constraint_residuals: dict[str, float]
    feasible: bool
    start: int
    starts_report: list[dict] = field(default_factory=list)


def event_matrix(x) -> np.ndarray:
    """4x4 zero-diagonal event matrix with off-diagonal entries ``x`` (row-major)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (N_PARAMS,):
        raise ValidationError(f"expected {N_PARAMS} parameters, got shape {x.shape}")
    D = np.zeros((4, 4))
    D[_OFF] = x
    return D


def mtcp4(x) -> MarkovArrivalProcess:
    D = event_matrix(x)
    return MarkovArrivalProcess(-np.diag(D.sum(axis=1)), D)


def _features(x, n_lags):
    """(M1, c2, M3, rho[0:n_lags]) of the MTCP4 built from ``x``.

    Specialised to a diagonal ``C`` so it can sit inside the optimiser loop;
    tests check it against the general interevent routines.
    """
    D = np.zeros((4, 4))
    D[_OFF] = x
    r = D.sum(axis=1)
    P = D / r[:, None]
    A = P.T - np.eye(4)
    A[-1] = 1.0
    b = np.zeros(4)
    b[-1] = 1.0
    alpha = np.linalg.solve(A, b)
    inv_r = 1.0 / r
    m1 = alpha @ inv_r
    m2 = 2.0 * alpha @ inv_r**2
    m3 = 6.0 * alpha @ inv_r**3
    var = m2 - m1 * m1
    # columns P^1 v .. P^k v, doubled until k >= n_lags
    block = (P @ inv_r)[:, None]
    Pk = P
    while block.shape[1] < n_lags:
        block = np.hstack((block, Pk @ block))
        Pk = Pk @ Pk
    cross = (alpha * inv_r) @ block[:, :n_lags]
    rho = (cross - m1 * m1) / var
    return m1, var / (m1 * m1), m3, rho


def objective(x, targets: FitTargets, n_lags: int = DEFAULT_LAGS) -> float:
    """Sum of squared autocorrelation errors over lags ``1..n_lags``.

    Non-positive or degenerate parameter vectors get a large finite penalty.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (N_PARAMS,) or not np.all(np.isfinite(x)) or np.any(x <= 0):
        return _PENALTY
    try:
        _, _, _, rho = _features(x, n_lags)
    except np.linalg.LinAlgError:
        return _PENALTY
    val = float(np.sum((targets.rho[:n_lags] - rho) ** 2))
    return val if math.isfinite(val) else _PENALTY


def targets_from_map(m: MarkovArrivalProcess, n_lags: int = DEFAULT_LAGS,
                     constrained_lags=(1, 2, 3)) -> FitTargets:
    return FitTargets(
        M1=interevent_moment(m, 1),
        c2=scv(m),
        M3=interevent_moment(m, 3),
        rho=autocorrelations(m, n_lags),
        constrained_lags=tuple(constrained_lags),
    )


def constraint_residuals(m: MarkovArrivalProcess, targets: FitTargets) -> dict[str, float]:
    """Achieved constraint errors, recomputed from the model.

    ``M1``, ``c2`` and ``M3`` are relative errors; ``rho_j`` absolute.
    """
    out = {
        "M1": abs(interevent_moment(m, 1) - targets.M1) / targets.M1,
        "c2": abs(scv(m) - targets.c2) / targets.c2,
        "M3": abs(interevent_moment(m, 3) - targets.M3) / abs(targets.M3),
    }
    lags = targets.constrained_lags
    if lags:
        rho = autocorrelations(m, max(lags))
        for j in lags:
            out[f"rho{j}"] = abs(rho[j - 1] - targets.rho[j - 1])
    return out


class _Scaled:
    """Constraint and objective evaluation in log-space with exact M1 matching."""

    def __init__(self, problem: FitProblem):
        self.problem = problem
        t = problem.targets
        self.t = t
        self.lags = np.array(t.constrained_lags, dtype=int) - 1
        self.m3n = t.M3 / t.M1**3
        self.lo = math.log(problem.x_min)
        self.hi = math.log(problem.x_max)

    def rescale(self, y):
        x = np.exp(y)
        m1, _, _, _ = _features(x, 1)
        return x * (m1 / self.t.M1)

    def evaluate(self, y):
        """Return (objective, constraints, box violation) or None when not evaluable.

        Bounds apply to the M1-rescaled parameters.
        """
        if not np.all(np.isfinite(y)):
            return None
        x = np.exp(y)
        try:
            m1, c2, m3, rho = _features(x, self.problem.n_lags)
        except np.linalg.LinAlgError:
            return None
        g = np.concatenate((
            [(c2 - self.t.c2) / self.t.c2, (m3 / m1**3 - self.m3n) / abs(self.m3n)],
            rho[self.lags] - self.t.rho[self.lags],
        ))
        f = float(np.sum((rho - self.t.rho[:self.problem.n_lags]) ** 2))
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            return None
        ly = y + math.log(m1 / self.t.M1)
        box = float(np.sum(np.maximum(self.lo - ly, 0) ** 2 + np.maximum(ly - self.hi, 0) ** 2))
        return f, g, box


def _run_start(scaled: _Scaled, y0: np.ndarray):
    prob = scaled.problem
    ncon = 2 + scaled.lags.size
    mult = np.zeros(ncon)
    weight = 10.0
    y = y0.copy()
    viol = np.inf
    for outer in range(prob.max_outer):
        def lagrangian(z):
            ev = scaled.evaluate(z)
            if ev is None:
                return _PENALTY
            f, g, box = ev
            return f + mult @ g + 0.5 * weight * (g @ g) + 1e3 * box

        res = minimize(lagrangian, y, method="Nelder-Mead",
                       options=dict(maxfev=prob.inner_maxfev, xatol=1e-10, fatol=1e-16,
                                    adaptive=True))
        y = res.x
        ev = scaled.evaluate(y)
        if ev is None:
            break
        g = ev[1]
        new_viol = float(np.max(np.abs(g)))
        mult = mult + weight * g
        if new_viol <= 0.1 * prob.constraint_tol:
            viol = new_viol
            break
        if new_viol > 0.25 * viol:
            weight = min(weight * 4.0, 1e10)
        viol = new_viol
    return y, outer + 1


def fit_mtcp4(problem: FitProblem) -> FitResult:
    """Best-of-multistart constrained fit of an MTCP of order 4.

    Raises:
        InfeasibleFitError: if no start meets every constraint within
            ``problem.constraint_tol``; ``.best`` carries the closest candidate.
    """
    scaled = _Scaled(problem)
    rng = np.random.default_rng(problem.seed)
    lo, hi = (math.log(v) for v in problem.init_range)
    starts = rng.uniform(lo, hi, size=(problem.multistart, N_PARAMS))
    tol = problem.constraint_tol
    candidates = []
    report = []
    for k, y0 in enumerate(starts):
        y, n_outer = _run_start(scaled, y0)
        x = scaled.rescale(y)
        model = mtcp4(x)
        if validate(model):
            report.append({"start": k, "objective": None, "max_violation": None, "outer": n_outer})
            continue
        resid = constraint_residuals(model, problem.targets)
        in_box = bool(np.all(x >= problem.x_min) and np.all(x <= problem.x_max))
        worst = max(resid.values())
        feasible = worst <= tol and in_box
        f = objective(x, problem.targets, problem.n_lags)
        log.debug("start %d: objective %.3g, max violation %.3g", k, f, worst)
        report.append({"start": k, "objective": f, "max_violation": worst, "outer": n_outer,
                       "feasible": feasible})
        candidates.append(FitResult(model, x, f, resid, feasible, k))
    if not candidates:
        raise InfeasibleFitError("no start produced a valid model")
    # deterministic reduction: feasibility, then objective, then start index
    candidates.sort(key=lambda r: (not r.feasible,
                                   r.objective if r.feasible else max(r.constraint_residuals.values()),
                                   r.start))
    best = candidates[0]
    best.starts_report = report
    if not best.feasible:
        raise InfeasibleFitError(
            f"no start met the constraints within {tol:g} "
            f"(best max violation {max(best.constraint_residuals.values()):.3g})",
            best=best,
        )
    return best
