"""spdekit: sparse-precision Gaussian and type-G random fields on triangulations."""

from .assembly import FemMatrices, assemble_fem
from .errors import (FileFormatError, MeshFormatError,
                     NotPositiveDefiniteError, NumericalError)
from .fractional import FractionalOperator, RationalApprox, build_fractional, \
    rational_fit
from .inference import (HyperParams, Observations, Posterior, condition,
                        fit_theta, log_posterior_theta, posterior_marginals,
                        predict)
from .mesh import (Mesh, evaluate_basis, icosphere, interval_mesh, load_mesh,
                   rectangle_mesh, save_mesh, vertex_weights)
from .nongaussian import (TypeGField, TypeGNoise, build_type_g,
                          conditional_mean, sample_mixing, sample_type_g,
                          sample_type_g_given_v)
from .pointprocess import (LgcpFit, PointPattern, integrated_intensity,
                           lgcp_fit_eta, lgcp_loglik, lgcp_loglik_grad,
                           simulate_lgcp)
from .precision import (FieldModel, SpaceTimeModel, ar1_precision,
                        build_precision, build_spacetime_precision,
                        make_barrier_kappa)
from .sparse import (CholeskyFactor, SparseSymMatrix, active_backend,
                     available_backends, factorize, read_matrix_market,
                     sample_gmrf, selected_inverse, write_matrix_market)
from .validate import run_checks

__version__ = "0.1.0"

__all__ = [
    "FemMatrices",
    "assemble_fem",
    "FileFormatError",
    "MeshFormatError",
    "NotPositiveDefiniteError",
    "NumericalError",
    "FractionalOperator",
    "RationalApprox",
    "build_fractional",
    "rational_fit",
    "HyperParams",
    "Observations",
    "Posterior",
    "condition",
    "fit_theta",
    "log_posterior_theta",
    "posterior_marginals",
    "predict",
    "Mesh",
    "evaluate_basis",
    "icosphere",
    "interval_mesh",
    "load_mesh",
    "rectangle_mesh",
    "save_mesh",
    "vertex_weights",
    "TypeGField",
    "TypeGNoise",
    "build_type_g",
    "conditional_mean",
    "sample_mixing",
    "sample_type_g",
    "sample_type_g_given_v",
    "LgcpFit",
    "PointPattern",
    "integrated_intensity",
    "lgcp_fit_eta",
    "lgcp_loglik",
    "lgcp_loglik_grad",
    "simulate_lgcp",
    "FieldModel",
    "SpaceTimeModel",
    "ar1_precision",
    "build_precision",
    "build_spacetime_precision",
    "make_barrier_kappa",
    "CholeskyFactor",
    "SparseSymMatrix",
    "active_backend",
    "available_backends",
    "factorize",
    "read_matrix_market",
    "sample_gmrf",
    "selected_inverse",
    "write_matrix_market",
    "run_checks",
    "__version__",
]
