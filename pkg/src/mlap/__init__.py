"""Radial m-Laplacian free-boundary ground states: solve, certify, and
compute sharp interpolation constants."""

from .nonlinearity import (NonlinearitySpec, HypothesesReport, DomainError,
                           SingularityError, eval_f, eval_F, eval_g,
                           check_hypotheses, power_minus_const, double_power,
                           cubic_minus_linear, linear_minus_const)
from .radial_ode import (ProblemParams, Controls, Profile, InverseProfile,
                         ShotClassification, series_start, integrate,
                         invert_profile, radial_scale, choose_eps,
                         profile_to_csv, dense_controls)
from .shooting import (GroundStateResult, NoCrossingFound, BracketLost, NoRoot,
                       classify, find_alpha, n1_alpha_from_F,
                       n1_quadrature_profile, compare_profiles_u,
                       sweep_classify, SweepTable, SweepRow)

__version__ = "0.1.0"
