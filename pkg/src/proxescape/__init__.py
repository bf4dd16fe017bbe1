"""Damped proximal methods near strict saddles of weakly convex functions."""

from .errors import (CapabilityError, CertificateError, ConvergenceError, ParameterError,
                     PreconditionError, ProxEscapeError)
from .problems import (CompositeProblem, ManifoldClass, ManifoldSpec, ProblemOracle, SmoothPiece,
                       SplitProblem, builtin_manifold, builtin_problem, pathological_prox)
from .proxengine import IterationMap, MapKind, ProxParams, max_damping, moreau_grad, moreau_value, prox
from .dynamics import EscapeReport, RunConfig, RunRecord, escape_experiment, run
from .spectra import SpectrumReport, Stability, classify_fixed_point, eigenvalues
from .mba import CertificateLog, MBAParams, ModelOracle, mba_run, rate_bound_check, validate_params

__version__ = "0.1.0"
