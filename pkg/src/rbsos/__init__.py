"""Robust global optimization of bilevel polynomial programs.

The pipeline: a bilevel polynomial program with box-uncertain linear
constraints is rewritten as one polynomial program over (x, y, mu) via
robust Farkas duality on the lower level, and its global optimal value is
bounded from below by a hierarchy of sums-of-squares relaxations compiled
to semidefinite programs.
"""

from .poly import Monomial, Polynomial, VariableLayout, gram_expand, monomial_basis
from .conic import ConicProgram, ConicSolution, psd_check, smat, svec
from .uncertainty import (AffineUncertainConstraint, BallSet, BoxSet,
                          IndeterminateError, Spectrahedron, UnboundedSetError,
                          ball_to_spectrahedron, box_extreme_points,
                          box_to_spectrahedron, closedness_sufficient,
                          max_affine_argmax, max_affine_over_set, slater_check)
from .farkas import (FarkasCertificate, check_implication_sampled,
                     find_certificate, refine_feasible, sample_feasible_points,
                     verify_certificate)
from .lowerlevel import (InfeasibleProblemError, LowerCertificate,
                         LowerLevelProblem, UnboundedProblemError,
                         is_robust_solution, robust_feasible_point,
                         solve_lower_robust, verify_lower_certificate)
from .bilevel import (BilevelProblem, BoxUpperConstraint, SingleLevelProgram,
                      ball_robust_feasible, box_corners, build_single_level,
                      hessian_positive_definite, load_problem,
                      mu_from_multipliers, problem_from_dict, problem_to_dict,
                      robust_feasible, save_problem)
from .sos import (GlobalCertificate, HierarchyReport, LevelSolution,
                  RelaxationLevel, build_relaxation, certify_global,
                  extract_sos_decomposition, identity_residual, run_hierarchy,
                  solve_relaxation)

__version__ = "0.1.0"
