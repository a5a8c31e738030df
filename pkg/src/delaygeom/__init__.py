"""Local delay and delay distributions of downlink Poisson cellular networks."""

__version__ = "0.1.0"

from .errors import (DomainError, IntegralDiverges, NumericalError, NumericalInstability,
                     QuadratureCancelled, UnsupportedCriterion)
from .model import (NetworkParams, NetworkRealization, Sinr, Sir, SirAsnr, active_probability,
                    conditional_coverage, critical_threshold, db_to_linear, gate, linear_to_db,
                    nearest_distance_pdf)
from .special import QuadOptions, hyp2f1, quad_semi_infinite, regularized_incomplete_beta, \
    script_F
from .analytic import (DelayQuery, char_fn, f1, f1_curve, f2_gilpelaez, f3_gilpelaez,
                       local_delay, local_delay_from_f1, packet_loss)
from .approx import (BetaShape, EulerParams, beta_shape, f1_riemann, f2_beta, f2_euler, f3_beta,
                     f3_euler)
from .mcsim import (EstimateWithCI, SimConfig, estimate_f1, estimate_f2, estimate_f3,
                    estimate_local_delay, estimate_moments, estimate_ploss, sample_realization,
                    simulate)
