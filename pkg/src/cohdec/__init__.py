"""Coherent-state communication with adaptive decoders over phase-insensitive Gaussian channels."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (CohdecError, MissingBranchError, NumericError, ParameterDomainError,
                     SearchSpaceError, ShapeError, UnsupportedHypothesisError, ValidationError)
from .gaussian import (ChannelParams, Constellation, DisplacedThermal, PassiveUnitary, apply_channel,
                       apply_interferometer, commute_channel_unitary_check)
from .measurement import (Povm, helstrom_binary_distribution, homodyne_binned_distribution,
                          kennedy_off_probability, outcome_distribution, pnr_distribution,
                          programmable_channel_prob)
from .adaptive import (AdaptivePolicy, CodebookSequence, FeedbackEncoder, JointTable, chain_rule_terms,
                       compile_policy_to_encoder, mutual_information, simulate_ad,
                       simulate_classical_picture)
from .rates import (ConcavityCertificate, RateResult, blahut_arimoto_constrained, concavity_certificate,
                    kennedy_scaling_study, optimize_sd_rate)
from .policy_search import optimize_ad_rate
from .theorem import theorem_check

__all__ = [
    "__version__",
    "CohdecError", "MissingBranchError", "NumericError", "ParameterDomainError", "SearchSpaceError",
    "ShapeError", "UnsupportedHypothesisError", "ValidationError",
    "ChannelParams", "Constellation", "DisplacedThermal", "PassiveUnitary", "apply_channel",
    "apply_interferometer", "commute_channel_unitary_check",
    "Povm", "helstrom_binary_distribution", "homodyne_binned_distribution", "kennedy_off_probability",
    "outcome_distribution", "pnr_distribution", "programmable_channel_prob",
    "AdaptivePolicy", "CodebookSequence", "FeedbackEncoder", "JointTable", "chain_rule_terms",
    "compile_policy_to_encoder", "mutual_information", "simulate_ad", "simulate_classical_picture",
    "ConcavityCertificate", "RateResult", "blahut_arimoto_constrained", "concavity_certificate",
    "kennedy_scaling_study", "optimize_sd_rate", "optimize_ad_rate", "theorem_check",
]
