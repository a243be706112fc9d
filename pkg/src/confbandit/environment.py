"""Reward sources for (question, configuration) pairs.

Two interchangeable environments drive training.  The simulated one scores
against a per-bucket mean-reward table with known optimal arms, so learning
behaviour can be checked exactly.  The live one renders the generation
prompt, calls a chat-completion endpoint, and scores the answer either
through a scalar reward endpoint or by asking a judge model for a binary
Yes/No verdict.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass

import numpy as np

from ._http import EndpointConfig, post_json
from .config_space import (
    ActionSpace,
    ActionTriple,
    RenderedConfig,
    fill_template,
    render_generation_prompt,
)
from .embedder import fnv1a64
from .errors import BoundsError, EnvironmentCallError, FormatError, ValidationError

JUDGE_TEMPLATE = """\
Assess with rigorous precision whether the provided reasoning process matches the ground truth answer.

For a given option and response, you need to match the content of the option and response. You must not rely on the option index only, as in many cases, the index is actually incorrect.

Apply these criteria for judgment and carefully consider:

Mandatory Evaluation Criteria
1. Content Equivalence: Accept only fully equivalent numerical representations (e.g., 0.5, 50%, 1/2) and variations in units or notation when they completely match the ground truth.
2. Logical Inference: Verify that at least one reasoning step directly and logically deduces the entire correct answer in a mathematically or logically sound manner.
3. Substantive Matching: For multiple-choice questions, assess the complete content of the answer (e.g., ensure "Option B" is fully equivalent to the correct answer, not just matching the label).
4. Semantic and Methodological Equivalence: Recognize alternative phrasing or solution methods only if a single step unambiguously converges on the complete correct answer.
5. Scientific and Technical Rigor: In technical contexts, differences in terminology, notation, or intermediate steps are acceptable only when they lead clearly and entirely to the correct conclusion.

Using the criteria outlined above, determine whether any single rule is met--if so, the response is considered a match.

Question
{question}

Ground Truth Answer
{correct_answer}

Provided Reasoning
{reasoning_process}

Provide your final judgment as a JSON object with the following structure:

{
  "judge_explanation": "<brief explanation>",
  "result": "<Yes or No>"
}

Make sure you output JSON in plain text, not as code format."""

REWARD_SENTENCE_TEMPLATE = (
    "For {question}, the generated answer {answer} matches the ground truth "
    "{reference} and is correct"
)

ENV_LLM_URL = "CONFBANDIT_LLM_URL"
ENV_LLM_KEY = "CONFBANDIT_LLM_KEY"
ENV_REWARD_URL = "CONFBANDIT_REWARD_URL"
ENV_REWARD_KEY = "CONFBANDIT_REWARD_KEY"

DEFAULT_BUCKETS = 4


@dataclass(frozen=True)
class QAPair:
    id: str
    question: str
    reference: str

    def __post_init__(self) -> None:
        if not self.id or not self.id.strip():
            raise ValidationError("pair id must be non-empty")
        if not self.question or not self.question.strip():
            raise ValidationError(f"pair {self.id!r}: question must be non-empty")
        if not self.reference or not self.reference.strip():
            raise ValidationError(f"pair {self.id!r}: reference must be non-empty")


@dataclass
class RewardOutcome:
    reward: float
    raw_answer: str | None = None
    latency_ms: int = 0
    source: str = "sim"  # sim | scalar_endpoint | binary_judge


def bucket_of(question_id: str, n_buckets: int) -> int:
    """Stable bucket assignment from a hash of the question id."""
    if n_buckets < 1:
        raise ValidationError(f"n_buckets must be >= 1, got {n_buckets}")
    return int(fnv1a64(question_id.encode("utf-8")) % n_buckets)


@dataclass
class SimSpec:
    """Per-bucket mean-reward table over the joint action space.

    mean_table has shape (buckets, |A_p|, |A_t|, |A_s|), entries in [0, 1].
    """

    mean_table: np.ndarray
    noise_sigma: float = 0.0
    seed: int = 0
    kind: str = "custom"

    def __post_init__(self) -> None:
        table = np.asarray(self.mean_table, dtype=np.float64)
        if table.ndim != 4:
            raise ValidationError(f"mean_table must be 4-d, got shape {table.shape}")
        if not np.all(np.isfinite(table)):
            raise ValidationError("mean_table contains non-finite entries")
        if table.min() < 0.0 or table.max() > 1.0:
            raise ValidationError("mean_table entries must lie in [0, 1]")
        if self.noise_sigma < 0.0:
            raise ValidationError("noise_sigma must be >= 0")
        self.mean_table = table

    @property
    def n_buckets(self) -> int:
        return int(self.mean_table.shape[0])

    def axis_sizes(self) -> tuple[int, int, int]:
        return tuple(int(s) for s in self.mean_table.shape[1:])

    def bucket_of(self, question_id: str) -> int:
        return bucket_of(question_id, self.n_buckets)

    def mean_reward(self, bucket: int, triple: ActionTriple) -> float:
        return float(
            self.mean_table[bucket, triple.instruction_index, triple.temperature_index, triple.steps_index]
        )

    def optimal_arm(self, bucket: int) -> ActionTriple:
        """Exhaustive argmax over the bucket's table; ties take the lowest flat index."""
        flat = int(np.argmax(self.mean_table[bucket].reshape(-1)))
        n_p, n_t, n_s = self.axis_sizes()
        rest, s = divmod(flat, n_s)
        p, t = divmod(rest, n_t)
        return ActionTriple(p, t, s)

    def optimal_value(self, bucket: int) -> float:
        return float(self.mean_table[bucket].max())

    @classmethod
    def with_dominant_arms(
        cls,
        space: ActionSpace,
        *,
        buckets: int = DEFAULT_BUCKETS,
        dominant_reward: float = 1.0,
        other_reward: float = 0.3,
        noise_sigma: float = 0.05,
        seed: int = 0,
    ) -> "SimSpec":
        """One planted optimum per bucket; everything else flat at other_reward."""
        if not 0.0 <= other_reward < dominant_reward <= 1.0:
            raise ValidationError("need 0 <= other_reward < dominant_reward <= 1")
        rng = np.random.default_rng(seed)
        sizes = space.axis_sizes()
        table = np.full((buckets, *sizes), other_reward, dtype=np.float64)
        for b in range(buckets):
            p = int(rng.integers(sizes[0]))
            t = int(rng.integers(sizes[1]))
            s = int(rng.integers(sizes[2]))
            table[b, p, t, s] = dominant_reward
        return cls(mean_table=table, noise_sigma=noise_sigma, seed=seed, kind="dominant")

    @classmethod
    def additive(
        cls,
        space: ActionSpace,
        *,
        buckets: int = DEFAULT_BUCKETS,
        base: float = 0.1,
        axis_gap: float = 0.25,
        noise_sigma: float = 0.02,
        seed: int = 0,
    ) -> "SimSpec":
        """Mean table additive across axes: base + sum of per-axis utilities.

        Each bucket prefers one index per axis (utility axis_gap, else 0), so
        the joint optimum equals the per-axis optima by construction.
        """
        if base < 0.0 or base + 3 * axis_gap > 1.0:
            raise ValidationError("base + 3*axis_gap must stay within [0, 1]")
        rng = np.random.default_rng(seed)
        sizes = space.axis_sizes()
        table = np.empty((buckets, *sizes), dtype=np.float64)
        for b in range(buckets):
            utils = []
            for n in sizes:
                u = np.zeros(n)
                u[int(rng.integers(n))] = axis_gap
                utils.append(u)
            table[b] = (
                base
                + utils[0][:, None, None]
                + utils[1][None, :, None]
                + utils[2][None, None, :]
            )
        return cls(mean_table=table, noise_sigma=noise_sigma, seed=seed, kind="additive")

    @classmethod
    def uniform_random(
        cls,
        space: ActionSpace,
        *,
        buckets: int = DEFAULT_BUCKETS,
        noise_sigma: float = 0.05,
        seed: int = 0,
    ) -> "SimSpec":
        rng = np.random.default_rng(seed)
        table = rng.uniform(0.0, 1.0, size=(buckets, *space.axis_sizes()))
        return cls(mean_table=table, noise_sigma=noise_sigma, seed=seed, kind="random")


def sim_reward(spec: SimSpec, pair: QAPair, triple: ActionTriple, rng_seed) -> RewardOutcome:
    """Mean-table reward plus clipped Gaussian noise; pure when sigma is 0."""
    sizes = spec.axis_sizes()
    for idx, size, name in zip(
        (triple.instruction_index, triple.temperature_index, triple.steps_index),
        sizes,
        ("instruction_index", "temperature_index", "steps_index"),
    ):
        if not 0 <= idx < size:
            raise BoundsError(f"{name} {idx} out of range [0, {size})")
    mean = spec.mean_reward(spec.bucket_of(pair.id), triple)
    if spec.noise_sigma > 0.0:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        mean = float(np.clip(mean + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0))
    return RewardOutcome(reward=mean, raw_answer=None, latency_ms=0, source="sim")


class SimEnvironment:
    """Callable environment over a SimSpec; owns the noise stream."""

    def __init__(self, spec: SimSpec, rng_seed=0):
        self.spec = spec
        self.rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)

    def __call__(self, pair: QAPair, triple: ActionTriple, rendered: RenderedConfig | None = None) -> RewardOutcome:
        return sim_reward(self.spec, pair, triple, self.rng)


def llm_generate(
    endpoint: EndpointConfig,
    pair: QAPair,
    config: RenderedConfig,
    options: dict | None = None,
) -> str:
    """Render the generation prompt and fetch a completion.

    Single user message, no system prompt; nucleus parameter fixed at 0.1 and
    a 5000-token cap unless overridden through options.
    """
    options = options or {}
    prompt = render_generation_prompt(pair.question, config)
    payload = {
        "messages": [{"role": "user", "content": prompt}],
        "temperature": float(config.temperature),
        "top_p": float(options.get("top_p", 0.1)),
        "max_tokens": int(options.get("max_tokens", 5000)),
    }
    doc = post_json(endpoint, payload)
    content = doc.get("content")
    if not isinstance(content, str) or not content.strip():
        raise EnvironmentCallError(f"{endpoint.url} returned an empty completion")
    return content


_FENCE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*|\s*```\s*$")


def _strip_fences(text: str) -> str:
    return _FENCE.sub("", text.strip())


def _parse_judgment(text: str) -> float | None:
    """Extract the Yes/No verdict from judge output; None when unparsable."""
    cleaned = _strip_fences(text)
    start, end = cleaned.find("{"), cleaned.rfind("}")
    if start == -1 or end <= start:
        return None
    try:
        doc = json.loads(cleaned[start : end + 1])
    except json.JSONDecodeError:
        return None
    verdict = doc.get("result") if isinstance(doc, dict) else None
    if not isinstance(verdict, str):
        return None
    verdict = verdict.strip().lower()
    if verdict == "yes":
        return 1.0
    if verdict == "no":
        return 0.0
    return None


def render_judge_prompt(pair: QAPair, answer: str) -> str:
    return fill_template(
        JUDGE_TEMPLATE,
        {
            "question": pair.question,
            "correct_answer": pair.reference,
            "reasoning_process": answer,
        },
    )


def score_binary_judge(endpoint: EndpointConfig, pair: QAPair, answer: str) -> RewardOutcome:
    """Ask the judge for a Yes/No verdict; one re-ask on malformed output."""
    prompt = render_judge_prompt(pair, answer)
    payload = {
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0.0,
        "top_p": 0.1,
        "max_tokens": 5000,
    }
    started = time.monotonic()
    for attempt in range(2):
        doc = post_json(endpoint, payload)
        content = doc.get("content")
        if isinstance(content, str):
            reward = _parse_judgment(content)
            if reward is not None:
                return RewardOutcome(
                    reward=reward,
                    raw_answer=answer,
                    latency_ms=int((time.monotonic() - started) * 1000),
                    source="binary_judge",
                )
    raise EnvironmentCallError("judge returned unparsable output twice")


def score_scalar(endpoint: EndpointConfig, pair: QAPair, answer: str) -> RewardOutcome:
    """Score the instantiated reward sentence through a scalar endpoint.

    A 'logit' score_kind passes through the logistic squash; anything else is
    clamped to [0, 1].
    """
    sentence = fill_template(
        REWARD_SENTENCE_TEMPLATE,
        {"question": pair.question, "answer": answer, "reference": pair.reference},
    )
    started = time.monotonic()
    doc = post_json(endpoint, {"text": sentence})
    if "score" not in doc:
        raise FormatError(f"{endpoint.url} response missing 'score'")
    try:
        score = float(doc["score"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{endpoint.url} returned non-numeric score") from exc
    if not np.isfinite(score):
        raise FormatError(f"{endpoint.url} returned non-finite score")
    kind = doc.get("score_kind", "unit")
    if kind == "logit":
        reward = float(1.0 / (1.0 + np.exp(-score)))
    else:
        reward = float(np.clip(score, 0.0, 1.0))
    return RewardOutcome(
        reward=reward,
        raw_answer=answer,
        latency_ms=int((time.monotonic() - started) * 1000),
        source="scalar_endpoint",
    )


class LiveEnvironment:
    """Generate with the LLM endpoint, then score with judge or scalar endpoint."""

    def __init__(
        self,
        llm: EndpointConfig,
        reward: EndpointConfig,
        *,
        scoring: str = "binary_judge",
        options: dict | None = None,
    ):
        if scoring not in ("binary_judge", "scalar"):
            raise ValidationError(f"scoring must be binary_judge|scalar, got {scoring!r}")
        self.llm = llm
        self.reward = reward
        self.scoring = scoring
        self.options = options or {}

    def __call__(self, pair: QAPair, triple: ActionTriple, rendered: RenderedConfig) -> RewardOutcome:
        answer = llm_generate(self.llm, pair, rendered, self.options)
        if self.scoring == "scalar":
            return score_scalar(self.reward, pair, answer)
        return score_binary_judge(self.reward, pair, answer)


def endpoints_from_env(env: dict | None = None) -> dict[str, EndpointConfig]:
    """Build endpoint configs from CONFBANDIT_* variables; keys stay out of logs."""
    env = os.environ if env is None else env
    out: dict[str, EndpointConfig] = {}
    if env.get(ENV_LLM_URL):
        out["llm"] = EndpointConfig(url=env[ENV_LLM_URL], api_key=env.get(ENV_LLM_KEY) or None)
    if env.get(ENV_REWARD_URL):
        out["reward"] = EndpointConfig(url=env[ENV_REWARD_URL], api_key=env.get(ENV_REWARD_KEY) or None)
    return out
