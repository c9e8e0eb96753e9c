"""Private skill-aware task assignment: PKD trees and PIR task packings."""
from .config import ExperimentConfig, load_config
from .crypto_he import KeyMaterial, decrypt, encrypt, keygen, threshold_decrypt
from .dp_noise import NoiseParams, noise_share, two_sided_geometric
from .metrics import capacity, message_counts, precision, quality
from .packing import brute_force_optimal, check_packing, min_weight, pkd_pir_packing
from .pkd_tree import PkdTree, allocate_budget, build_pkd, estimate_matching, post_process
from .protocol_sum import MessageLog, estimate_median, run_priv_med, run_private_sum
from .space import Subspace
from .workload import TaskSpec, matches

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "KeyMaterial", "MessageLog", "NoiseParams", "PkdTree", "Subspace", "TaskSpec",
    "allocate_budget", "brute_force_optimal", "build_pkd", "capacity", "check_packing", "decrypt",
    "encrypt", "estimate_matching", "estimate_median", "keygen", "load_config", "matches",
    "message_counts", "min_weight", "noise_share", "pkd_pir_packing", "post_process", "precision",
    "quality", "run_priv_med", "run_private_sum", "threshold_decrypt", "two_sided_geometric",
]
