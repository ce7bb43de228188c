"""Correlated shadowing for wireless links modelled as line integrals of a spatial field."""

__version__ = "0.1.0"

from .covariance import (  # noqa: E402
    ShadowingParams,
    covariance_matrix,
    geometry_corr,
    link_variance_closed_form,
    shadowing_corr,
    total_fading_corr,
)
from .errors import (  # noqa: E402
    ArgumentError,
    ConfigError,
    DataError,
    DomainError,
    LinkShadowError,
    NumericError,
    ParseError,
    RankError,
    ResourceError,
    UndefinedCorrelationError,
)
from .geometry import Deployment, Link, LinkPairGeometry, PathLossParams, chain_deployment, grid_deployment  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "__version__",
    "BACKEND",
    "ShadowingParams",
    "covariance_matrix",
    "geometry_corr",
    "link_variance_closed_form",
    "shadowing_corr",
    "total_fading_corr",
    "ArgumentError",
    "ConfigError",
    "DataError",
    "DomainError",
    "LinkShadowError",
    "NumericError",
    "ParseError",
    "RankError",
    "ResourceError",
    "UndefinedCorrelationError",
    "Deployment",
    "Link",
    "LinkPairGeometry",
    "PathLossParams",
    "chain_deployment",
    "grid_deployment",
]
