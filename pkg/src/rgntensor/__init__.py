"""Riemannian Gauss-Newton for low-Tucker-rank tensor estimation.

Modules
-------
tensor          unfoldings, mode products, colexicographic vectorization
tucker          Tucker tensors, T-HOSVD / ST-HOSVD, HOOI
manifold        tangent spaces, projections and retractions of the fixed-rank manifold
measurement     linear measurement maps and their least-squares sketches
rgn             the RGN solver, the tensor SVD variant and an IHT baseline
initialization  spectral and random starting points
bench           seeded synthetic experiments, CSV/JSON traces
estimators      scikit-learn style wrappers
"""

__version__ = "0.1.0"

from .estimators import TensorCompletion, TensorSVD, TuckerRegression
from .initialization import (
    completion_init,
    random_init,
    spectral_init_regression,
    spectral_init_svd,
)
from .manifold import (
    DegenerateRankError,
    TangentBasis,
    TangentVector,
    contract,
    extend,
    project_tangent,
    retract,
    riemannian_gradient,
    tangent_basis,
)
from .measurement import (
    Completion,
    GeneralDense,
    Identity,
    MeasurementEnsemble,
    RankOne,
    completion_sample,
    gaussian_ensemble,
    rank1_ensemble,
    trip_probe,
)
from .rgn import (
    DivergenceError,
    IterationTrace,
    RgnConfig,
    SolverError,
    iht_solve,
    rgn_solve,
    rgn_svd_solve,
)
from .tensor import matricize, mode_product, multi_mode_product, tensorize
from .tucker import TuckerTensor, hooi, hosvd, random_tucker, st_hosvd, t_hosvd

__all__ = [
    "__version__",
    "TuckerRegression",
    "TensorCompletion",
    "TensorSVD",
    "completion_init",
    "random_init",
    "spectral_init_regression",
    "spectral_init_svd",
    "DegenerateRankError",
    "TangentBasis",
    "TangentVector",
    "contract",
    "extend",
    "project_tangent",
    "retract",
    "riemannian_gradient",
    "tangent_basis",
    "Completion",
    "GeneralDense",
    "Identity",
    "MeasurementEnsemble",
    "RankOne",
    "completion_sample",
    "gaussian_ensemble",
    "rank1_ensemble",
    "trip_probe",
    "DivergenceError",
    "IterationTrace",
    "RgnConfig",
    "SolverError",
    "iht_solve",
    "rgn_solve",
    "rgn_svd_solve",
    "matricize",
    "mode_product",
    "multi_mode_product",
    "tensorize",
    "TuckerTensor",
    "hooi",
    "hosvd",
    "random_tucker",
    "st_hosvd",
    "t_hosvd",
]
