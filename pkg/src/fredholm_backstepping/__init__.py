"""Fredholm backstepping for the heat equation on the torus with two scalar controls."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    NumericalError,
    ResonanceError,
    SharpRangeError,
)
from .gains import (  # noqa: E402
    FredholmTransform,
    GainProfile,
    PotentialSpec,
    apply_pair,
    apply_transform,
    assemble_transform,
    build_q_vector,
    feedback_evaluate,
    is_admissible_lambda,
    solve_gain_profile,
    solve_gains,
)
from .spectral import (  # noqa: E402
    SpectralFunction,
    evaluate_on_grid,
    inner_product_hs,
    laplacian_apply,
    parity_project,
    project_to_spectrum,
    sobolev_norm,
)

__all__ = [
    "ConfigError",
    "FredholmTransform",
    "GainProfile",
    "NumericalError",
    "PotentialSpec",
    "ResonanceError",
    "SharpRangeError",
    "SpectralFunction",
    "apply_pair",
    "apply_transform",
    "assemble_transform",
    "build_q_vector",
    "evaluate_on_grid",
    "feedback_evaluate",
    "inner_product_hs",
    "is_admissible_lambda",
    "laplacian_apply",
    "parity_project",
    "project_to_spectrum",
    "sobolev_norm",
    "solve_gain_profile",
    "solve_gains",
]
