"""Weighted-perimeter n-bubbles on the line with a log-concave density."""
__version__ = "0.1.0"

from .configuration import (Configuration, Interval, MassSpec, build_standard, classify,
                            region_masses, stationarity_residual, total_perimeter)
from .density import Density, Family, QuadratureSettings, check_flags, invert_mass, mass
from .estimators import StandardBubble, TheoremVerifier
from .exceptions import (FlagViolation, HypothesisViolation, InvalidTarget, IsobubbleError,
                         LogConcavityRequired, NonConvergence, OriginSingularity)
from .flow import FlowSettings, FlowState, perimeter_rate, perimeter_rate2, run_until, step
from .moves import (MoveReport, consolidate, eliminate_alternating, merge_across_origin,
                    reduce_to_fixpoint, transpose)
from .optimizer import (SignAssignment, VerificationReport, bifurcation_search,
                        enumerate_assignments, inflation_experiment, realize, verify_theorem)
