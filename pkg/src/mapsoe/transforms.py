"""
MMPP <-> MTCP constructions.

* :func:`mmpp_from_mtcp` -- MMPP with the same background chain and the same
  first two count moments as a given MTCP.
* :func:`mtcp_from_slow_mmpp` -- the order-``2p`` MTCP whose count mean and
  variance equal those of a slow MMPP of order ``p`` (second-order
  equivalence, "SOE").
* :func:`coupled_map_from_mmpp` -- order-``2p`` MAP with the same counting
  process as the MMPP, obtained by turning each event into an ``a <-> b``
  sub-phase flip.

Phases of the order-``2p`` models are ordered ``(1a, 1b, 2a, 2b, ...)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import MarkovArrivalProcess
from .errors import PreconditionError, StructuralError, ValidationError

_SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Mmpp:
    """Markov-modulated Poisson process: modulating generator ``Q`` and rates ``lam``."""

    Q: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        Q = kernels.check_generator(self.Q)
        lam = np.array(self.lam, dtype=float).ravel()
        if lam.shape != (Q.shape[0],):
            raise ValidationError(f"lambda has length {lam.size}, expected {Q.shape[0]}")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0) or not np.any(lam > 0):
            raise ValidationError("Poisson rates must be finite, >= 0 and not all zero")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "lam", lam)

    @property
    def order(self) -> int:
        return self.Q.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        """``S_i = sum_{j != i} q_ij``."""
        return -np.diag(self.Q).copy()

    def to_map(self, eta=None) -> MarkovArrivalProcess:
        L = np.diag(self.lam)
        return MarkovArrivalProcess(self.Q - L, L, eta)

    @classmethod
    def from_map(cls, m: MarkovArrivalProcess) -> "Mmpp":
        D = m.D
        if np.count_nonzero(D - np.diag(np.diag(D))):
            raise StructuralError("an MMPP needs a diagonal D")
        return cls(m.Q, np.diag(D))


@dataclass(frozen=True, eq=False)
class Mtcp:
    """Markovian transition counting process: every jump of ``Q`` is an event."""

    Q: np.ndarray

    def __post_init__(self):
        Q = kernels.check_generator(self.Q)
        if Q.shape[0] < 2:
            raise ValidationError("an MTCP needs at least two phases")
        object.__setattr__(self, "Q", Q)

    @property
    def order(self) -> int:
        return self.Q.shape[0]

    def to_map(self, eta=None) -> MarkovArrivalProcess:
        C = np.diag(np.diag(self.Q))
        return MarkovArrivalProcess(C, self.Q - C, eta)

    @classmethod
    def from_event_matrix(cls, D) -> "Mtcp":
        """MTCP with zero-diagonal event matrix ``D`` and ``C = diag(-D 1)``."""
        D = kernels.as_square(D, "D")
        if np.any(np.diag(D) != 0):
            raise StructuralError("an MTCP event matrix has a zero diagonal")
        return cls(D - np.diag(D.sum(axis=1)))

    @classmethod
    def from_map(cls, m: MarkovArrivalProcess) -> "Mtcp":
        if np.count_nonzero(m.C - np.diag(np.diag(m.C))) or np.any(np.diag(m.D) != 0):
            raise StructuralError("an MTCP needs a diagonal C and a zero-diagonal D")
        return cls(m.Q)


@dataclass(frozen=True)
class SlownessReport:
    slow: bool
    margins: np.ndarray

    def __bool__(self):
        return self.slow

    @property
    def violating_phases(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.margins <= 0)]


@dataclass(frozen=True)
class AggregatedGenerator:
    G: np.ndarray
    theta: np.ndarray
    S: np.ndarray


def mmpp_from_mtcp(mtcp: Mtcp) -> Mmpp:
    """MMPP on the same chain with ``lambda = -diag(Q)``."""
    return Mmpp(mtcp.Q, -np.diag(mtcp.Q))


def is_slow(mmpp: Mmpp) -> SlownessReport:
    """Slow iff every ``lambda_i`` strictly exceeds the exit rate ``S_i``."""
    margins = mmpp.lam - mmpp.exit_rates
    return SlownessReport(slow=bool(np.all(margins > 0)), margins=margins)


def _block_generator(Qmod: np.ndarray, diag_blocks) -> np.ndarray:
    p = Qmod.shape[0]
    out = np.kron(Qmod * (1 - np.eye(p)), np.eye(2))
    for i, blk in enumerate(diag_blocks):
        out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = blk
    return out


def mtcp_from_slow_mmpp(mmpp: Mmpp, allow_boundary: bool = False) -> Mtcp:
    """Associated MTCP of order ``2p`` for a slow MMPP of order ``p``.

    Args:
        mmpp: the MMPP; must be slow.
        allow_boundary: accept ``lambda_i == S_i`` (zero a<->b rate) as long
            as the resulting generator stays irreducible. A warning is issued.

    Raises:
        PreconditionError: if the MMPP is not slow.
    """
    report = is_slow(mmpp)
    if not report.slow:
        boundary_ok = allow_boundary and np.all(report.margins >= 0)
        if not boundary_ok:
            bad = ", ".join(f"phase {i + 1}: lambda - S = {report.margins[i]:.6g}"
                            for i in report.violating_phases)
            raise PreconditionError(f"MMPP is not slow ({bad})")
    lam, S = mmpp.lam, mmpp.exit_rates
    blocks = [np.array([[-l, l - s], [l - s, -l]]) for l, s in zip(lam, S)]
    Qbar = _block_generator(mmpp.Q, blocks)
    if not report.slow:
        if not kernels.is_irreducible(Qbar):
            raise PreconditionError("boundary MMPP yields a reducible MTCP")
        warnings.warn("boundary case lambda_i == S_i: some a<->b rates are zero", stacklevel=2)
    return Mtcp(Qbar)


def coupled_map_from_mmpp(mmpp: Mmpp) -> MarkovArrivalProcess:
    """Order-``2p`` MAP with the same counting process as ``mmpp``."""
    lam, S = mmpp.lam, mmpp.exit_rates
    blocks = [np.array([[-(l + s), l], [l, -(l + s)]]) for l, s in zip(lam, S)]
    Qt = _block_generator(mmpp.Q, blocks)
    Dt = np.kron(np.diag(lam), _SWAP)
    return MarkovArrivalProcess(Qt - Dt, Dt)


def row_lift(p: int) -> np.ndarray:
    """``I_p (x) 1_2'``: sums the a/b sub-phases (``p x 2p``)."""
    return np.kron(np.eye(p), np.ones((1, 2)))


def col_lift(p: int) -> np.ndarray:
    """``I_p (x) 1_2`` (``2p x p``)."""
    return np.kron(np.eye(p), np.ones((2, 1)))


def aggregate(m2p) -> AggregatedGenerator:
    """Recover ``G``, its stationary law and the exit rates from a ``2p`` construction.

    Accepts an :class:`Mtcp` or :class:`MarkovArrivalProcess` built by
    :func:`mtcp_from_slow_mmpp` or :func:`coupled_map_from_mmpp`.
    """
    Q = m2p.Q
    n = Q.shape[0]
    if n % 2 or n < 4:
        raise StructuralError("expected an even order >= 4")
    p = n // 2
    G = np.zeros((p, p))
    tol = 1e-12 * max(1.0, float(np.max(np.abs(Q))))
    for i in range(p):
        for j in range(p):
            blk = Q[2 * i:2 * i + 2, 2 * j:2 * j + 2]
            if i == j:
                if abs(blk[0, 0] - blk[1, 1]) > tol or abs(blk[0, 1] - blk[1, 0]) > tol:
                    raise StructuralError(f"diagonal block {i + 1} is not symmetric")
            else:
                if abs(blk[0, 1]) > tol or abs(blk[1, 0]) > tol or abs(blk[0, 0] - blk[1, 1]) > tol:
                    raise StructuralError(f"coupling block ({i + 1},{j + 1}) is not a multiple of I_2")
                G[i, j] = blk[0, 0]
    S = G.sum(axis=1)
    G[np.diag_indices(p)] = -S
    return AggregatedGenerator(G=G, theta=kernels.stationary_distribution(G), S=S)


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    diff = float(np.max(np.abs(a - b)))
    return diff / scale if scale > 0 else 0.0


def identity_residuals(mmpp: Mmpp, powers=(0, 1, 2, 3), times=(0.1, 1.0)) -> dict[str, float]:
    """Worst relative residual of each block identity linking the MMPP's
    coupled MAP (tilde), its associated MTCP (bar) and the aggregate ``G``.

    Keys: ``i``, ``i-prime``, ``ii``, ``iii``, ``iv``, ``v``, ``v-prime``,
    ``vi``, ``vii``, ``viii``.
    """
    p = mmpp.order
    bar = mtcp_from_slow_mmpp(mmpp).to_map()
    til = coupled_map_from_mmpp(mmpp)
    agg = aggregate(bar)
    G, theta, lam = agg.G, agg.theta, mmpp.lam
    R, K = row_lift(p), col_lift(p)
    res: dict[str, float] = {}

    def worst(key, *pairs):
        res[key] = max(res.get(key, 0.0), *(_rel(a, b) for a, b in pairs))

    for k in powers:
        Qt, Qb, Gk = (np.linalg.matrix_power(M, k) for M in (til.Q, bar.Q, G))
        worst("i", (R @ Qt, Gk @ R), (R @ Qb, Gk @ R), (Qt @ K, K @ Gk), (Qb @ K, K @ Gk))
    for t in times:
        Et, Eb, Eg = (kernels.matrix_exponential(M, t) for M in (til.Q, bar.Q, G))
        worst("i-prime", (R @ Et, Eg @ R), (R @ Eb, Eg @ R), (Et @ K, K @ Eg), (Eb @ K, K @ Eg))

    pi_ref = 0.5 * theta @ R
    worst("ii", (til.pi, pi_ref), (bar.pi, pi_ref))
    piD_ref = 0.5 * theta @ np.diag(lam) @ R
    worst("iii", (til.pi @ til.D, piD_ref), (bar.pi @ bar.D, piD_ref))
    worst("iv", (til.event_rates, K @ lam), (bar.event_rates, K @ lam))

    dev_t, dev_b = til.dev, bar.dev
    dev_g = kernels.deviation_matrix(G, theta).dev
    worst("v", (R @ dev_t @ K, 2 * dev_g), (R @ dev_b @ K, 2 * dev_g))
    worst("v-prime", (dev_b @ K, dev_t @ K), (R @ dev_b, R @ dev_t))
    worst("vi", (dev_b @ bar.event_rates, dev_t @ til.event_rates))
    for t in times:
        dt_t = kernels.transient_deviation_matrix(til.Q, t, dev_t)
        dt_b = kernels.transient_deviation_matrix(bar.Q, t, dev_b)
        dt_g = kernels.transient_deviation_matrix(G, t, dev_g)
        worst("vi", (dt_b @ bar.event_rates, dt_t @ til.event_rates))
        worst("viii", (R @ dev_t @ dt_t @ K, 2 * dev_g @ dt_g),
              (R @ dev_b @ dt_b @ K, 2 * dev_g @ dt_g))
    worst("vii", (bar.pi @ bar.D @ dev_b, til.pi @ til.D @ dev_t))
    return res


def random_slow_mmpp(p: int, rng: np.random.Generator, q_range=(0.1, 2.0),
                     margin_range=(0.5, 5.0)) -> Mmpp:
    """Random slow MMPP: ``q_ij ~ U(q_range)``, ``lambda_i = S_i + U(margin_range)``."""
    Q = rng.uniform(*q_range, size=(p, p))
    np.fill_diagonal(Q, 0.0)
    S = Q.sum(axis=1)
    np.fill_diagonal(Q, -S)
    lam = S + rng.uniform(*margin_range, size=p)
    return Mmpp(Q, lam)
