"""REINFORCE training over the configuration space.

Single pass over the dataset, T Boltzmann-sampled trials per question,
plain reward-weighted gradient ascent (no baseline, no momentum), and an
exponentially annealed sampling temperature driven by the global step
counter.  Everything is deterministic given the config seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import policy
from .config_space import ActionSpace, ActionTriple, resolve
from .embedder import DEFAULT_WIDTH, Embedding, embed_hashed
from .environment import QAPair
from .errors import FormatError, TrainingError, ValidationError

DEFAULT_ANNEAL_ALPHA = 0.98


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    trials_per_question: int = 4
    tau0: float = 1.0
    tau_min: float = 0.1
    anneal_alpha: float | None = None  # derived from run length when None
    reward_low: float = 0.0
    reward_high: float = 1.0
    seed: int = 0
    tempered_grad: bool = False
    rescale_to: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.learning_rate > 0.0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.trials_per_question < 1:
            raise ValidationError("trials_per_question must be >= 1")
        if not (self.tau0 >= self.tau_min > 0.0):
            raise ValidationError(
                f"need tau0 >= tau_min > 0, got tau0={self.tau0} tau_min={self.tau_min}"
            )
        if self.anneal_alpha is not None and not 0.0 < self.anneal_alpha <= 1.0:
            raise ValidationError(f"anneal_alpha must be in (0, 1], got {self.anneal_alpha}")
        if not self.reward_low < self.reward_high:
            raise ValidationError("reward_low must be < reward_high")
        if self.rescale_to is not None:
            lo, hi = self.rescale_to
            if not lo < hi:
                raise ValidationError("rescale_to must be an increasing interval")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "trials_per_question": self.trials_per_question,
            "tau0": self.tau0,
            "tau_min": self.tau_min,
            "anneal_alpha": self.anneal_alpha,
            "reward_low": self.reward_low,
            "reward_high": self.reward_high,
            "seed": self.seed,
            "tempered_grad": self.tempered_grad,
            "rescale_to": list(self.rescale_to) if self.rescale_to else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}  # noqa: C401 - tiny
        unknown = set(doc) - known
        if unknown:
            raise FormatError(f"unknown train-config fields: {', '.join(sorted(unknown))}")
        doc = dict(doc)
        if doc.get("rescale_to") is not None:
            doc["rescale_to"] = tuple(doc["rescale_to"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise FormatError(f"bad train config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"train config {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise FormatError(f"train config {path!r} must hold a JSON object")
        return cls.from_dict(doc)


def resolve_alpha(config: TrainConfig, total_steps: int | None = None) -> float:
    """Annealing factor: configured value, else fitted so tau reaches tau_min
    exactly at the last step, else a generic 0.98."""
    if config.anneal_alpha is not None:
        return config.anneal_alpha
    if total_steps is not None and total_steps > 1 and config.tau0 > config.tau_min:
        return float((config.tau_min / config.tau0) ** (1.0 / (total_steps - 1)))
    if config.tau0 == config.tau_min:
        return 1.0
    return DEFAULT_ANNEAL_ALPHA


def anneal_tau(config: TrainConfig, k: int, alpha: float | None = None) -> float:
    """tau_k = max(tau_min, tau0 * alpha^k) with the global step counter k."""
    if k < 0:
        raise ValidationError(f"step k must be >= 0, got {k}")
    a = resolve_alpha(config) if alpha is None else alpha
    return max(config.tau_min, config.tau0 * a**k)


@dataclass
class Transition:
    question_id: str
    triple: ActionTriple
    reward: float
    logp_p: float
    logp_t: float
    logp_s: float
    tau_used: float
    k: int
    grad_sq_norm: float


@dataclass
class TrainReport:
    transitions: list[Transition]
    final_params: policy.PolicyParams
    initial_params: policy.PolicyParams
    config: TrainConfig
    alpha: float
    space: ActionSpace
    snapshots: list[tuple[int, policy.PolicyParams]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.transitions)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions], dtype=np.float64)

    @property
    def mean_reward_curve(self) -> np.ndarray:
        r = self.rewards
        if r.size == 0:
            return r
        return np.cumsum(r) / np.arange(1, r.size + 1)

    @property
    def gradient_sq_norm_curve(self) -> np.ndarray:
        return np.array([t.grad_sq_norm for t in self.transitions], dtype=np.float64)


def _effective_reward(config: TrainConfig, raw: float) -> tuple[float, float]:
    """Clamp to the declared range; optionally rescale for the update.

    Returns (recorded reward, reward used in the gradient step).
    """
    clamped = min(max(raw, config.reward_low), config.reward_high)
    if config.rescale_to is None:
        return clamped, clamped
    lo, hi = config.rescale_to
    span = config.reward_high - config.reward_low
    scaled = lo + (clamped - config.reward_low) * (hi - lo) / span
    return clamped, scaled


def reinforce_step(
    params: policy.PolicyParams,
    context,
    env,
    config: TrainConfig,
    k: int,
    *,
    pair: QAPair,
    space: ActionSpace,
    rng: np.random.Generator,
    alpha: float | None = None,
) -> Transition:
    """One trial: sample at tau_k, query the environment, ascend the log-prob.

    Mutates params in place; a zero reward leaves them bit-identical.
    """
    tau_k = anneal_tau(config, k, alpha)
    decision = policy.sample(params, context, tau_k, rng)
    rendered = resolve(space, decision.triple)
    outcome = env(pair, decision.triple, rendered)
    raw = float(outcome.reward)
    if not math.isfinite(raw):
        raise TrainingError(f"environment returned non-finite reward {raw!r} at step {k}")
    reward, update_reward = _effective_reward(config, raw)
    grad_tau = tau_k if config.tempered_grad else 1.0
    grads = policy.grad_log_prob(params, context, decision.triple, tau=grad_tau)
    gsq = policy.grad_sq_norm(grads)
    policy.add_scaled_(params, grads, config.learning_rate * update_reward)
    return Transition(
        question_id=pair.id,
        triple=decision.triple,
        reward=reward,
        logp_p=decision.logp_p,
        logp_t=decision.logp_t,
        logp_s=decision.logp_s,
        tau_used=tau_k,
        k=k,
        grad_sq_norm=update_reward * update_reward * gsq,
    )


def train(
    dataset: list[QAPair],
    env,
    config: TrainConfig,
    *,
    space: ActionSpace,
    params: policy.PolicyParams | None = None,
    embed=None,
    input_width: int = DEFAULT_WIDTH,
    snapshot_every: int | None = None,
    shuffle_seed: int | None = None,
) -> TrainReport:
    """Run Algorithm-style training: questions in order, T trials each.

    Seeds split off config.seed: child 0 initializes parameters (when none
    are passed in), child 1 drives action sampling, child 2 shuffles (only
    when shuffle_seed is None but shuffling is requested elsewhere).
    """
    if not dataset:
        raise ValidationError("dataset must be non-empty")
    children = np.random.SeedSequence(config.seed).spawn(3)
    if params is None:
        params = policy.init_params(space, input_width, children[0])
    if embed is None:
        width = params.input_width

        def embed(question: str) -> Embedding:
            return embed_hashed(question, width)

    sampling_rng = np.random.default_rng(children[1])
    order = list(dataset)
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)

    total_steps = len(order) * config.trials_per_question
    alpha = resolve_alpha(config, total_steps)
    initial = params.copy()
    snapshots: list[tuple[int, policy.PolicyParams]] = []
    if snapshot_every:
        snapshots.append((0, params.copy()))
    transitions: list[Transition] = []
    context_cache: dict[str, np.ndarray] = {}

    k = 0
    for pair in order:
        ctx = context_cache.get(pair.id)
        if ctx is None:
            emb = embed(pair.question)
            ctx = emb.values if isinstance(emb, Embedding) else np.asarray(emb, dtype=np.float64)
            context_cache[pair.id] = ctx
        for _ in range(config.trials_per_question):
            try:
                transitions.append(
                    reinforce_step(
                        params, ctx, env, config, k,
                        pair=pair, space=space, rng=sampling_rng, alpha=alpha,
                    )
                )
            except Exception as exc:
                partial = TrainReport(
                    transitions=transitions,
                    final_params=params,
                    initial_params=initial,
                    config=config,
                    alpha=alpha,
                    space=space,
                    snapshots=snapshots,
                )
                if isinstance(exc, TrainingError):
                    exc.report = partial
                    raise
                raise TrainingError(f"trial failed at step {k}: {exc}", report=partial) from exc
            k += 1
            if snapshot_every and k % snapshot_every == 0:
                snapshots.append((k, params.copy()))
    if snapshot_every and (not snapshots or snapshots[-1][0] != k):
        snapshots.append((k, params.copy()))
    return TrainReport(
        transitions=transitions,
        final_params=params,
        initial_params=initial,
        config=config,
        alpha=alpha,
        space=space,
        snapshots=snapshots,
    )


def estimate_objective(
    params: policy.PolicyParams,
    env,
    probe_questions: list[QAPair],
    n_samples: int,
    *,
    space: ActionSpace,
    embed=None,
    rng_seed=0,
    tau: float = 1.0,
) -> float:
    """Monte-Carlo estimate of the expected reward under the tau=1 policy."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if not probe_questions:
        raise ValidationError("probe_questions must be non-empty")
    if embed is None:
        width = params.input_width

        def embed(question: str) -> Embedding:
            return embed_hashed(question, width)

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    cache: dict[str, np.ndarray] = {}
    total = 0.0
    for s in range(n_samples):
        pair = probe_questions[s % len(probe_questions)]
        ctx = cache.get(pair.id)
        if ctx is None:
            emb = embed(pair.question)
            ctx = emb.values if isinstance(emb, Embedding) else np.asarray(emb, dtype=np.float64)
            cache[pair.id] = ctx
        decision = policy.sample(params, ctx, tau, rng)
        rendered = resolve(space, decision.triple)
        total += float(env(pair, decision.triple, rendered).reward)
    return total / n_samples
