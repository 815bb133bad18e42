"""Bayes linear adjustment of covariance matrices treated as single objects."""

from .adjustment import (
    AdjustmentResult,
    Collection,
    adjust,
    adjust_elementwise_oracle,
    adjust_stepwise,
    build_collections,
    build_constant_basis,
    build_individual_population,
    collection_resolution,
    population_matrix,
    project,
)
from .belief import (
    Affine,
    BeliefStore,
    QuantityId,
    RandomMatrix,
    center,
    distance_sq,
    expectation_matrix,
    inner_product,
)
from .diagnostics import (
    BearingReport,
    DiagramArc,
    DiagramModel,
    DiagramNode,
    bearing,
    cond_lin_indep,
    diagram_export,
    eigen_diagnostic,
    size_ratio,
)
from .errors import DataError, InsufficientDataError, ModelError, SpecificationError
from .exchangeable import (
    DataBatch,
    ExchangeableSpec,
    gaussian_residual_spec,
    population_beliefs,
    sample_beliefs,
    sample_covariance,
)

__version__ = "0.1.0"
