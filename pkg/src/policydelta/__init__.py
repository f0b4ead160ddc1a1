"""On- and off-policy treatment-effect estimators and the identities linking them."""

__version__ = "0.1.0"

from .data import (
    Dataset,
    EstimateResult,
    Framing,
    LoggedRecord,
    ModelKind,
    PolicyTable,
    RewardModel,
    split_by_arm,
    true_policy_value,
    validate_dataset,
)
from .equivalence import (
    ABExperiment,
    EquivalenceReport,
    PropensityMode,
    Verdict,
    ab_to_ope,
    ab_weight,
    beta_star_ab,
    center_reward_model,
    verify_dim_equivalence,
    verify_radim_dr_equivalence,
)
from .offpolicy import (
    bessel_factor,
    delta_beta_ips_estimate,
    delta_dr_estimate,
    delta_ips_estimate,
    delta_weight,
    dr_estimate,
    estimate_beta_star,
)
from .onpolicy import (
    dim_estimate,
    fit_scaling_coefficient,
    radim_estimate,
    residual_variance_ratio,
    sample_mean,
    sample_variance,
)
from .synth import SyntheticConfig, exhaustive_dataset, gen_ab_experiment, gen_bandit_logs

__all__ = [name for name in dir() if not name.startswith("_")]
