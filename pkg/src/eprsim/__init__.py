"""Gaussian-state simulator for the squeezed-light EPR experiment and its dice analogue."""

from .errors import (
    DegenerateConditioning,
    EprSimError,
    InvalidArgument,
    InvalidConfig,
    InvalidPlan,
    InvalidState,
    ProvenanceMismatch,
)
from .experiments import (
    DiceEnsemble,
    DiceReport,
    EprExperimentConfig,
    EprReport,
    Histogram,
    histogram,
    run_dice_experiment,
    run_epr_experiment,
    sweep_squeeze,
    throw_dice,
)
from .gaussian import (
    BALANCED,
    BeamSplitterParams,
    FlipConvention,
    GaussianState,
    Quadrature,
    SqueezeParams,
    apply_beam_splitter,
    apply_rotation,
    apply_squeeze,
    epr_state,
    marginal,
    squeezed_state,
    symplectic_eigenvalues,
    tensor,
    vacuum,
    validate_physicality,
)
from .measurement import (
    CriterionReport,
    SamplingPlan,
    ShotBatch,
    conditional_state,
    duan_product,
    duan_product_sampled,
    heisenberg_product,
    inferred_variance,
    reid_epr_product,
    sample_shots,
)

__version__ = "0.1.0"
