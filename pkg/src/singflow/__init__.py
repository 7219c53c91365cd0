"""Numerical tools for singular flows near a hyperbolic singularity.

The package blows the singularity up into its sphere of directions, computes
the rescaled Poincare map and its extension over the singular fiber,
evaluates closed forms for linear models, and builds finite central models
whose chain classes expose central segments.
"""

from .blowup import BlowupPoint, LiftedVector, canonical_direction, lift_field, lift_flow
from .central_model import (CentralModel, ChainClassDecomposition, FiberMap,
                            build_from_linear_model, chain_classes, detect_segment,
                            detect_trapping, load_model, central_segment_scenario,
                            main_theorem_scenario, segment_height)
from .closed_forms import (jordan_leading_coefficient, moving_frame_map, psi_star_center_formula,
                           second_derivative_diagonal, second_derivative_general, tau_prime_zero)
from .errors import (BracketingError, ChartExit, ModelSchemaError, NoConvergence, NotNormalError,
                     RepeatedDiagonalizableError, ResolutionTooCoarse, SingflowError,
                     SingularMatrixError, StepUnderflow)
from .fields import (Diagonal, Focus, Jordan, LinearField, PolynomialRemainder, PolyTerm,
                     SmoothField, center_plane_field, classify_2d, expm, expm_matrix, load_field)
from .flow import FlowResult, flow, flow_interval
from .poincare import (NormalVector, psi_star, rescaled_poincare, solve_return_time,
                       verify_linear_reduction)

__version__ = "0.1.0"
