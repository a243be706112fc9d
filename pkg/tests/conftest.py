import numpy as np
import pytest

from confbandit.config_space import ActionSpace
from confbandit import policy


@pytest.fixture
def small_space():
    return ActionSpace(
        steps_values=(3, 5),
        temperature_values=(0.0, 1.0),
        base_instructions=("Think step by step.", "Answer directly."),
        variation_instructions=("Be concise.",),
    )


@pytest.fixture
def tiny_params(small_space):
    # Small widths keep finite-difference sweeps cheap.
    return policy.init_params(
        small_space, input_width=12, seed=np.random.SeedSequence(7),
        hidden_width=10, head_widths=(8, 6),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
