import json

import pytest
from hypothesis import given, strategies as st

from confbandit.config_space import (
    DEFAULT_BASE_INSTRUCTIONS,
    DEFAULT_VARIATION_INSTRUCTIONS,
    GENERATION_TEMPLATE,
    ActionSpace,
    ActionTriple,
    build_default_space,
    check_bounds,
    fill_template,
    flat_index,
    load_space,
    render_generation_prompt,
    resolve,
    save_space,
    triple_from_flat,
)
from confbandit.errors import BoundsError, ValidationError


def test_default_space_cardinalities():
    space = build_default_space()
    assert space.num_steps == 8
    assert space.num_temperatures == 11
    assert space.num_instructions == 100
    assert space.joint_size == 8800


def test_default_space_values():
    space = build_default_space()
    assert space.steps_values == tuple(range(3, 11))
    assert space.temperature_values == tuple(round(0.1 * k, 1) for k in range(11))
    assert len(DEFAULT_BASE_INSTRUCTIONS) == 10
    assert len(DEFAULT_VARIATION_INSTRUCTIONS) == 10


def test_instruction_text_row_major(small_space):
    # instruction_index = base * n_variations + variation
    text = small_space.instruction_text(1)
    assert text == "Answer directly. Be concise."


def test_flat_index_layout(small_space):
    # j = (p * |A_t| + t) * |A_s| + s
    assert flat_index(small_space, ActionTriple(0, 0, 0)) == 0
    assert flat_index(small_space, ActionTriple(0, 0, 1)) == 1
    assert flat_index(small_space, ActionTriple(0, 1, 0)) == 2
    assert flat_index(small_space, ActionTriple(1, 0, 0)) == 4


@given(st.integers(min_value=0, max_value=8799))
def test_flat_round_trip_default(j):
    space = build_default_space()
    assert flat_index(space, triple_from_flat(space, j)) == j


def test_check_bounds_names_axis(small_space):
    with pytest.raises(BoundsError, match="instruction"):
        check_bounds(small_space, ActionTriple(2, 0, 0))
    with pytest.raises(BoundsError, match="temperature"):
        check_bounds(small_space, ActionTriple(0, -1, 0))
    with pytest.raises(BoundsError, match="steps"):
        check_bounds(small_space, ActionTriple(0, 0, 9))


def test_resolve(small_space):
    cfg = resolve(small_space, ActionTriple(1, 1, 0))
    assert cfg.instruction_text == "Answer directly. Be concise."
    assert cfg.temperature == 1.0
    assert cfg.steps == 3


def test_space_validation_rejects_bad_axes():
    with pytest.raises(ValidationError):
        ActionSpace((5, 3), (0.0, 1.0), ("a.",), ("b.",))  # not increasing
    with pytest.raises(ValidationError):
        ActionSpace((3, 11), (0.0, 1.0), ("a.",), ("b.",))  # steps above 10
    with pytest.raises(ValidationError):
        ActionSpace((3, 5), (0.0, 1.5), ("a.",), ("b.",))  # temperature above 1
    with pytest.raises(ValidationError):
        ActionSpace((3, 5), (0.0, 1.0), ("",), ("b.",))  # empty instruction


def test_fill_template_single_pass():
    # A placeholder-shaped value injected by one field must not be
    # re-substituted, and unrelated braces survive untouched.
    out = fill_template("{a} and {b} {not_a_field}", {"a": "{b}", "b": "X"})
    assert out == "{b} and X {not_a_field}"


def test_fill_template_handles_literal_json():
    tmpl = 'Reply with {"result": "Yes"} for {question}'
    assert fill_template(tmpl, {"question": "Q"}) == 'Reply with {"result": "Yes"} for Q'


def test_render_generation_prompt_fields(small_space):
    cfg = resolve(small_space, ActionTriple(0, 1, 1))
    prompt = render_generation_prompt("What is 2+2?", cfg)
    assert "2. Question: What is 2+2?" in prompt
    assert "Think step by step. Be concise." in prompt
    assert "no more than 5 reasoning steps" in prompt
    assert "{" not in prompt.replace("{question}", "")  # no unfilled holes


def test_render_generation_prompt_rejects_empty(small_space):
    cfg = resolve(small_space, ActionTriple(0, 0, 0))
    with pytest.raises(ValidationError):
        render_generation_prompt("", cfg)
    with pytest.raises(ValidationError):
        render_generation_prompt("   ", cfg)


def test_generation_template_placeholders():
    for hole in ("{question}", "{instruction_prompt}", "{optimal_steps}"):
        assert hole in GENERATION_TEMPLATE


def test_space_save_load_round_trip(small_space, tmp_path):
    path = tmp_path / "space.json"
    save_space(small_space, str(path))
    loaded = load_space(str(path))
    assert loaded == small_space
    # file is plain JSON
    doc = json.loads(path.read_text())
    assert set(doc) >= {"steps_values", "temperature_values"}
