"""Markovian arrival processes: counting and inter-event statistics,
second-order equivalent constructions, MTCP fitting, MAP/M/1 queues and
Monte Carlo cross-checks."""

from .core import (CountMomentReport, Diagnostic, MarkovArrivalProcess, asymptotic_rate,
                   count_mean, count_report, count_third_moment, count_variance,
                   dispersion_limit, validate, variance_y_intercept)
from .errors import (InfeasibleFitError, InstabilityError, MapError, NumericalError,
                     PreconditionError, StructuralError, UnsupportedCaseError, ValidationError)
from .fitting import FitProblem, FitResult, FitTargets, fit_mtcp4, mtcp4, targets_from_map
from .interevent import (InterEventStats, autocorrelations, embedded_chain, interevent_moment,
                         interevent_stats, scv)
from .kernels import (convolution_integral, deviation_matrix, matrix_exponential,
                      stationary_distribution, transient_deviation_matrix)
from .modelfile import ModelFileError, dump_model, load_model
from .qbd import QbdSolution, SweepRow, solve_queue, workload_sweep
from .simulate import SimConfig, SimEstimate, estimate_count_moments, estimate_interevent
from .transforms import (Mmpp, Mtcp, aggregate, coupled_map_from_mmpp, is_slow, identity_residuals,
                         mmpp_from_mtcp, mtcp_from_slow_mmpp)

__version__ = "0.1.0"
