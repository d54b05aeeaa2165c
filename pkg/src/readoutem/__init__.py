"""Readout error mitigation under the independent per-qubit noise model."""

__version__ = "0.1.0"

from .core import (
    BitSubset,
    DenseLimitError,
    ReadoutError,
    ShotRecord,
    SparseDistribution,
    ValidationError,
    empirical_distribution,
    empirical_marginal,
    global_correlation,
    local_correlation,
    marginalize,
    relative_entropy,
)
from .ibu import (
    IbuConfig,
    IbuResult,
    InfeasibleSupportError,
    ibu_step,
    ibu_step_from_shots,
    lre_objective,
    mitigate_full_ibu,
    mitigate_marginal_ibu,
)
from .local import (
    BootstrapConfig,
    LocalProtocolConfig,
    bootstrap_statistic,
    run_local_protocol,
    sample_subgroups,
)
from .lsq import mitigate_full_lsq, mitigate_marginal_lsq
from .noise_model import (
    ProductChannel,
    QubitChannel,
    SingularChannelError,
    apply_forward,
    apply_inverse,
    channel_entry,
    load_calibration,
    log_channel_entry,
    sample_noisy_shots,
)
from .structural import (
    EmConfig,
    EmResult,
    MixtureModel,
    em_step,
    fit_mixture,
    model_correlation,
    responsibilities,
    sweep_k,
)
from .synth_oracle import brute_force_lre, brute_force_mixture, make_device_profile, make_ghz_truth
