"""Ordered model selection with calibrated pairwise acceptance thresholds."""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapCalibrationTable,
    PresmoothResult,
    ValidityDiagnostics,
    bootstrap_calibrate,
    bootstrap_effective_dims,
    bootstrap_joint_draws,
    presmooth,
    validity_diagnostics,
)
from .bounds import QFParams, norm_upper, pinsker_tv_bound, pinsker_tv_bound_op, qf_lower, qf_upper
from .calibration import (
    CalibrationTable,
    ExcessRiskEstimate,
    JointDrawMatrix,
    critical_values,
    excess_risk_mc,
    familywise_exceedance,
    multiplicity_correction,
    power_loss_critical_values,
    power_loss_params,
    sample_joint_draws,
    tail_quantile,
)
from .errors import (
    AllZeroResiduals,
    BadExponent,
    ConfigInvalid,
    DimensionMismatch,
    MissingPair,
    NotFunctional,
    NotOrderedPair,
    NotProjectionFamily,
    RequiresKnownTruth,
    SingularGram,
    SingularGramWarning,
    TailTooDeepWarning,
)
from .family import (
    DesignMatrix,
    ModelFamily,
    OrderingReport,
    WeightingScheme,
    build_projection_family,
    check_ordering,
)
from .moments import (
    NoiseSpec,
    PairMoments,
    RiskPoint,
    functional_variance,
    pair_bias,
    pair_variance,
    risk_argmin,
    risk_profile,
)
from .selector import (
    OracleReport,
    SelectionResult,
    aic_equivalence_check,
    oracle,
    payment_for_adaptation,
    sma_select,
    test_statistics,
)
