"""Non-stationary Gaussian random fields with locally varying anisotropy.

A diffusion-type stochastic PDE with a spatially varying tensor
``H(s) = gamma I + v(s) v(s)^T`` is discretized with a finite-volume
scheme on a periodic grid, giving a Gaussian Markov random field with a
sparse precision matrix. The package assembles those matrices, samples
realizations, computes exact variances and correlations, and estimates
the tensor parametrization from observed fields by MAP.
"""

__version__ = "0.1.0"

from .analytic import (
    StationaryCharacterization,
    characterize_constant_tensor,
    matern_correlation,
    stationary_variance,
)
from .assembly import (
    FaceTensors,
    PrecisionModel,
    StencilAssembler,
    StencilMatrix,
    assemble_anisotropy_matrix,
    assemble_precision,
    sample_tensor_on_faces,
    write_coordinate_format,
)
from .coefficients import (
    Anisotropy,
    ConstantFieldLayout,
    ConstantVector,
    FourierFieldLayout,
    FourierTerm,
    FourierVectorField,
    RotatedStreamField,
    SampledVectorField,
    ScaledFieldLayout,
    ScaledVectorField,
    rotated_gradient_field,
)
from .estimator import AnisotropyEstimator
from .gmrf import NotPositiveDefiniteError, PrecisionFactor, factorize
from .grid import Grid
from .inference import (
    FitResult,
    LogPosterior,
    ObservationModel,
    StudyResult,
    h_discrepancy,
    log_posterior,
    map_estimate,
    multistart_map,
    observed_information,
    simulation_study,
)

__all__ = [
    "__version__",
    "Grid",
    "Anisotropy",
    "ConstantVector",
    "FourierTerm",
    "FourierVectorField",
    "RotatedStreamField",
    "SampledVectorField",
    "ScaledVectorField",
    "rotated_gradient_field",
    "ConstantFieldLayout",
    "FourierFieldLayout",
    "ScaledFieldLayout",
    "FaceTensors",
    "StencilMatrix",
    "StencilAssembler",
    "PrecisionModel",
    "sample_tensor_on_faces",
    "assemble_anisotropy_matrix",
    "assemble_precision",
    "write_coordinate_format",
    "PrecisionFactor",
    "NotPositiveDefiniteError",
    "factorize",
    "stationary_variance",
    "matern_correlation",
    "StationaryCharacterization",
    "characterize_constant_tensor",
    "ObservationModel",
    "LogPosterior",
    "log_posterior",
    "FitResult",
    "map_estimate",
    "observed_information",
    "StudyResult",
    "simulation_study",
    "h_discrepancy",
    "multistart_map",
    "AnisotropyEstimator",
]
