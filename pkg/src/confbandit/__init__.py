"""confbandit: contextual-bandit tuning of LLM reasoning configurations.

Learns, per question, which instruction format, sampling temperature, and
reasoning-step cap to use, via REINFORCE over a factorized softmax policy
with annealed Boltzmann exploration.  Ships a simulated environment with
known optima for verification and a live LLM + reward-endpoint path for
real use.
"""

from .config_space import (
    ActionSpace,
    ActionTriple,
    RenderedConfig,
    build_default_space,
    flat_index,
    render_generation_prompt,
    resolve,
    triple_from_flat,
)
from .embedder import Embedding, embed_hashed
from .environment import (
    LiveEnvironment,
    QAPair,
    RewardOutcome,
    SimEnvironment,
    SimSpec,
)
from .policy import (
    PolicyDecision,
    PolicyParams,
    checkpoint_load,
    checkpoint_save,
    forward,
    grad_log_prob,
    greedy,
    init_params,
    sample,
)
from .trainer import TrainConfig, TrainReport, Transition, anneal_tau, train

__version__ = "0.1.0"

__all__ = [
    "ActionSpace",
    "ActionTriple",
    "Embedding",
    "LiveEnvironment",
    "PolicyDecision",
    "PolicyParams",
    "QAPair",
    "RenderedConfig",
    "RewardOutcome",
    "SimEnvironment",
    "SimSpec",
    "TrainConfig",
    "TrainReport",
    "Transition",
    "anneal_tau",
    "build_default_space",
    "checkpoint_load",
    "checkpoint_save",
    "embed_hashed",
    "flat_index",
    "forward",
    "grad_log_prob",
    "greedy",
    "init_params",
    "render_generation_prompt",
    "resolve",
    "sample",
    "train",
    "triple_from_flat",
    "__version__",
]
