"""Constants for strmac."""

from typing import Final

STOP: Final = "STOP"
NEG_INF_TOKEN: Final = "neg_inf"

# Environment config keys
CONF_N_AGENTS: Final = "n_agents"
CONF_FEATURE_DIM: Final = "feature_dim"
CONF_N_CLASSES: Final = "n_classes"
CONF_EVIDENCE_THRESHOLD: Final = "evidence_threshold"
CONF_DISTRACTOR_FRACTION: Final = "distractor_fraction"
CONF_TOKEN_COST_RANGE: Final = "token_cost_range"
CONF_HISTORY_COST_RANGE: Final = "history_cost_range"
CONF_QUERY_NOISE: Final = "query_noise"
CONF_DECOY_WEIGHT: Final = "decoy_weight"
CONF_SEARCH_CAP: Final = "search_cap"
CONF_SEED: Final = "seed"

# Training config keys
CONF_LEARNING_RATE: Final = "learning_rate"
CONF_EPOCHS: Final = "epochs"
CONF_BATCH_SIZE: Final = "batch_size"
CONF_WEIGHT_DECAY: Final = "weight_decay"
CONF_W_ALT: Final = "w_alt"
CONF_OPTIMIZER: Final = "optimizer"
CONF_INCLUDE_STOP: Final = "include_stop"
CONF_EMBEDDING_DIM: Final = "embedding_dim"
CONF_HIDDEN_DIM: Final = "hidden_dim"
CONF_TEMPERATURE: Final = "temperature"

# Pipeline config keys
CONF_BOOTSTRAP_FRACTION: Final = "bootstrap_fraction"
CONF_ROUNDS: Final = "rounds"
CONF_TOP_K: Final = "k"
CONF_HELD_OUT_TASKS: Final = "held_out_tasks"
CONF_WORKERS: Final = "workers"
CONF_WARM_START: Final = "warm_start"
CONF_TRAIN: Final = "train"

# Evaluation config keys
CONF_MU: Final = "mu"
CONF_COST_SCALE: Final = "c"
CONF_TOP_N: Final = "top_n"

DEFAULT_N_AGENTS: int = 5
DEFAULT_FEATURE_DIM: int = 8
DEFAULT_N_CLASSES: int = 4
DEFAULT_EVIDENCE_THRESHOLD: float = 0.6
DEFAULT_DISTRACTOR_FRACTION: float = 0.4
DEFAULT_TOKEN_COST_RANGE: tuple[int, int] = (80, 320)
DEFAULT_HISTORY_COST_RANGE: tuple[int, int] = (10, 60)
DEFAULT_QUERY_NOISE: float = 0.15
DEFAULT_DECOY_WEIGHT: float = 0.6
DEFAULT_SEARCH_CAP: int = 7
DEFAULT_SEED: int = 0

DEFAULT_LEARNING_RATE: float = 0.01
DEFAULT_EPOCHS: int = 50
DEFAULT_BATCH_SIZE: int = 32
DEFAULT_WEIGHT_DECAY: float = 1e-4
DEFAULT_W_ALT: float = 0.5
DEFAULT_OPTIMIZER: str = "sgd"
DEFAULT_EMBEDDING_DIM: int = 16
DEFAULT_HIDDEN_DIM: int = 32
DEFAULT_TEMPERATURE: float = 1.0

DEFAULT_BOOTSTRAP_FRACTION: float = 0.2
DEFAULT_ROUNDS: int = 3
DEFAULT_TOP_K: int = 2
DEFAULT_WORKERS: int = 4

DEFAULT_MU: float = 0.1
DEFAULT_COST_SCALE: float = 1000.0
DEFAULT_TOP_N: int = 3

OPTIMIZERS: Final = ("sgd", "adam")
SEARCH_MODES: Final = ("exhaustive", "pruned", "guided")

DEGENERATE_NORM: Final = 1e-12
UNIT_NORM_TOLERANCE: Final = 1e-9
SYMMETRY_BREAK_SCALE: Final = 0.01

# Reference band for sampled fraction of the path space (five-agent benchmark).
REFERENCE_SAMPLED_FRACTION: Final = (0.136, 0.159)
