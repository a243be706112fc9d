"""Discrete configuration action space and prompt rendering.

The action space is the cross product of three axes: an instruction prompt
(a base directive paired with a variation suffix), a sampling temperature,
and a cap on the number of reasoning steps.  A policy picks one index per
axis; this module turns those indices into concrete text and numbers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import BoundsError, FormatError, ValidationError

DEFAULT_BASE_INSTRUCTIONS = (
    "Break down your reasoning into clear, sequential steps.",
    "Systematically structure your analysis, elaborating on each step with thorough detail.",
    "Examine the logical connections between concepts and articulate each step in depth.",
    "Consider multiple perspectives and explore alternative viewpoints comprehensively.",
    "Apply creative reasoning to unearth unconventional insights and challenge standard assumptions.",
    "Adopt a detailed and rigorous approach, balancing specific details with overarching themes.",
    "Reflect on your assumptions and refine your argument through critical self-questioning and validation.",
    "Explain your reasoning step-by-step in a clear, accessible manner for all audiences.",
    "Include a systematic self-check and verification of your reasoning process to ensure consistency.",
    "Conclude by summarizing your key points and re-evaluating your final answer for completeness.",
)

DEFAULT_VARIATION_INSTRUCTIONS = (
    "Thoroughly analyze all possible interpretations for comprehensive understanding.",
    "Decompose the problem into smaller, logical components for clarity and precision.",
    "Cross-reference reasoning with similar examples or prior cases for validation.",
    "Review and verify each step to ensure no key detail is overlooked.",
    "Challenge conventional thinking while maintaining logical soundness.",
    "Ensure every premise is clearly understood and meticulously applied.",
    "Pay close attention to minor details that might otherwise be neglected.",
    "Use simple, straightforward language to guarantee clarity and accessibility.",
    "Perform a detailed self-audit to detect and correct inconsistencies.",
    "Validate conclusions by aligning them with established principles or empirical data.",
)

GENERATION_TEMPLATE = """\
1. Objective
Your task is to generate a comprehensive answer to the provided question while tailoring your reasoning and response style to the specific demands of the task. Ensure that your answer fully adheres to the requirements without inventing any details.

2. Question: {question}

3. Adaptive Reasoning Strategy
Use the following instructions to shape your response: {instruction_prompt}. Reason in according to the given method and adjust your reasoning approach dynamically based on the nature of the question:

You must follow no more than {optimal_steps} reasoning steps.

Requirements:
1. Provide one answer that completely satisfies the question's requirements.
2. Ensure your reasoning strictly adheres to the specified steps and covers all necessary details.
3. Deliver a clear, precise, and accurate answer.
4. Avoid repetition or ambiguity; your response should be distinct and well-reasoned."""

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


def fill_template(template: str, fields: dict[str, str]) -> str:
    """Substitute {name} placeholders in one pass, leaving other braces alone.

    str.format would choke on templates that contain literal JSON braces, so
    placeholders are replaced only when the name is present in ``fields``.
    """

    def _sub(match: re.Match[str]) -> str:
        name = match.group(1)
        return fields.get(name, match.group(0))

    return _PLACEHOLDER.sub(_sub, template)


@dataclass(frozen=True)
class ActionSpace:
    """Three discrete axes: instruction grid, temperatures, step caps."""

    steps_values: tuple[int, ...]
    temperature_values: tuple[float, ...]
    base_instructions: tuple[str, ...]
    variation_instructions: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps_values", tuple(int(v) for v in self.steps_values))
        object.__setattr__(self, "temperature_values", tuple(float(v) for v in self.temperature_values))
        object.__setattr__(self, "base_instructions", tuple(str(s) for s in self.base_instructions))
        object.__setattr__(self, "variation_instructions", tuple(str(s) for s in self.variation_instructions))
        if not self.steps_values:
            raise ValidationError("steps_values must be non-empty")
        for v in self.steps_values:
            if not 3 <= v <= 10:
                raise ValidationError(f"steps value {v} outside [3, 10]")
        if any(b <= a for a, b in zip(self.steps_values, self.steps_values[1:])):
            raise ValidationError("steps_values must be strictly increasing")
        if not self.temperature_values:
            raise ValidationError("temperature_values must be non-empty")
        for v in self.temperature_values:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"temperature value {v} outside [0, 1]")
        if any(b <= a for a, b in zip(self.temperature_values, self.temperature_values[1:])):
            raise ValidationError("temperature_values must be strictly increasing")
        for name, items in (
            ("base_instructions", self.base_instructions),
            ("variation_instructions", self.variation_instructions),
        ):
            if not items:
                raise ValidationError(f"{name} must be non-empty")
            if any(not s.strip() for s in items):
                raise ValidationError(f"{name} entries must be non-empty text")

    @property
    def num_instructions(self) -> int:
        return len(self.base_instructions) * len(self.variation_instructions)

    @property
    def num_temperatures(self) -> int:
        return len(self.temperature_values)

    @property
    def num_steps(self) -> int:
        return len(self.steps_values)

    @property
    def joint_size(self) -> int:
        return self.num_instructions * self.num_temperatures * self.num_steps

    def axis_sizes(self) -> tuple[int, int, int]:
        """Sizes in policy-head order: (instructions, temperatures, steps)."""
        return (self.num_instructions, self.num_temperatures, self.num_steps)

    def instruction_text(self, instruction_index: int) -> str:
        if not 0 <= instruction_index < self.num_instructions:
            raise BoundsError(
                f"instruction_index {instruction_index} out of range [0, {self.num_instructions})"
            )
        base, variation = divmod(instruction_index, len(self.variation_instructions))
        return f"{self.base_instructions[base]} {self.variation_instructions[variation]}"


@dataclass(frozen=True)
class ActionTriple:
    """One choice per axis; instruction index is row-major over (base, variation)."""

    instruction_index: int
    temperature_index: int
    steps_index: int


@dataclass(frozen=True)
class RenderedConfig:
    instruction_text: str
    temperature: float
    steps: int


def build_default_space() -> ActionSpace:
    """Steps 3..10, temperatures 0.0..1.0 by 0.1, and the 10x10 instruction grid."""
    return ActionSpace(
        steps_values=tuple(range(3, 11)),
        temperature_values=tuple(round(0.1 * k, 1) for k in range(11)),
        base_instructions=DEFAULT_BASE_INSTRUCTIONS,
        variation_instructions=DEFAULT_VARIATION_INSTRUCTIONS,
    )


def check_bounds(space: ActionSpace, triple: ActionTriple) -> None:
    if not 0 <= triple.instruction_index < space.num_instructions:
        raise BoundsError(
            f"instruction_index {triple.instruction_index} out of range [0, {space.num_instructions})"
        )
    if not 0 <= triple.temperature_index < space.num_temperatures:
        raise BoundsError(
            f"temperature_index {triple.temperature_index} out of range [0, {space.num_temperatures})"
        )
    if not 0 <= triple.steps_index < space.num_steps:
        raise BoundsError(
            f"steps_index {triple.steps_index} out of range [0, {space.num_steps})"
        )


def resolve(space: ActionSpace, triple: ActionTriple) -> RenderedConfig:
    """Turn axis indices into instruction text and numeric settings."""
    check_bounds(space, triple)
    return RenderedConfig(
        instruction_text=space.instruction_text(triple.instruction_index),
        temperature=space.temperature_values[triple.temperature_index],
        steps=space.steps_values[triple.steps_index],
    )


def flat_index(space: ActionSpace, triple: ActionTriple) -> int:
    """Row-major joint index over (instruction, temperature, steps)."""
    check_bounds(space, triple)
    return (
        triple.instruction_index * space.num_temperatures + triple.temperature_index
    ) * space.num_steps + triple.steps_index


def triple_from_flat(space: ActionSpace, index: int) -> ActionTriple:
    if not 0 <= index < space.joint_size:
        raise BoundsError(f"joint index {index} out of range [0, {space.joint_size})")
    rest, steps_index = divmod(index, space.num_steps)
    instruction_index, temperature_index = divmod(rest, space.num_temperatures)
    return ActionTriple(instruction_index, temperature_index, steps_index)


def render_generation_prompt(question: str, config: RenderedConfig) -> str:
    """Fill the generation template for one question/config pair."""
    if not question or not question.strip():
        raise ValidationError("question must be non-empty")
    return fill_template(
        GENERATION_TEMPLATE,
        {
            "question": question,
            "instruction_prompt": config.instruction_text,
            "optimal_steps": str(int(config.steps)),
        },
    )


def save_space(space: ActionSpace, path: str) -> None:
    doc = {
        "steps_values": list(space.steps_values),
        "temperature_values": list(space.temperature_values),
        "base_instructions": list(space.base_instructions),
        "variation_instructions": list(space.variation_instructions),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_space(path: str) -> ActionSpace:
    """Read an action-space override file (JSON with the ActionSpace field names)."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"action-space file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"action-space file {path!r} must hold a JSON object")
    missing = [
        k
        for k in ("steps_values", "temperature_values", "base_instructions", "variation_instructions")
        if k not in doc
    ]
    if missing:
        raise FormatError(f"action-space file {path!r} missing keys: {', '.join(missing)}")
    try:
        return ActionSpace(
            steps_values=tuple(doc["steps_values"]),
            temperature_values=tuple(doc["temperature_values"]),
            base_instructions=tuple(doc["base_instructions"]),
            variation_instructions=tuple(doc["variation_instructions"]),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"action-space file {path!r}: {exc}") from exc
