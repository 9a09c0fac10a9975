"""Jump SDEs whose coefficients are lifted from Hermite-Sobolev distributions."""

from .coefficients import (ClampedLinearSmallJump, DistributionCoefficientSet, IdentityLargeJump,
                           LiftedField, SyntheticField, TanhLargeJump, ZeroSmallJump,
                           verify_hypotheses)
from .config import RunConfig, load_config
from .engine import (PathRecord, PicardTrace, SolveProblem, interlace_solve, localize_initial,
                     localize_parameter, picard_solve, solve_local, solve_reduced_euler,
                     truncate_coeffs)
from .hermite import (ExpansionVector, QuadratureRule, dual_pair, project, sobolev_inner,
                      sobolev_norm, translate, translation_matrix)
from .noise import LargeJumpSampler, LevyModel, NoiseRealization, sample_noise

__all__ = [
    "ClampedLinearSmallJump", "DistributionCoefficientSet", "ExpansionVector", "IdentityLargeJump",
    "LargeJumpSampler", "LevyModel", "LiftedField", "NoiseRealization", "PathRecord", "PicardTrace",
    "QuadratureRule", "SolveProblem", "SyntheticField", "TanhLargeJump", "ZeroSmallJump",
    "RunConfig", "dual_pair", "interlace_solve", "load_config", "localize_initial", "localize_parameter", "picard_solve",
    "project", "sample_noise", "sobolev_inner", "sobolev_norm", "solve_local",
    "solve_reduced_euler", "translate", "translation_matrix", "truncate_coeffs",
    "verify_hypotheses",
]
