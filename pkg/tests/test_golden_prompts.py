from pathlib import Path

import pytest

from confbandit.config_space import build_default_space, render_generation_prompt, resolve
from confbandit.environment import QAPair, render_judge_prompt

from golden_fixtures import FIXTURES

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.mark.parametrize("name,question,reference,triple,answer", FIXTURES, ids=[f[0] for f in FIXTURES])
def test_generation_prompt_matches_golden(name, question, reference, triple, answer):
    cfg = resolve(build_default_space(), triple)
    rendered = render_generation_prompt(question, cfg).encode("utf-8")
    stored = (GOLDEN_DIR / f"{name}.generation.txt").read_bytes()
    assert rendered == stored


@pytest.mark.parametrize("name,question,reference,triple,answer", FIXTURES, ids=[f[0] for f in FIXTURES])
def test_judge_prompt_matches_golden(name, question, reference, triple, answer):
    pair = QAPair(id=name, question=question, reference=reference)
    rendered = render_judge_prompt(pair, answer).encode("utf-8")
    stored = (GOLDEN_DIR / f"{name}.judge.txt").read_bytes()
    assert rendered == stored
