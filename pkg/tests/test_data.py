import pytest

from confbandit.data import generate_bucketed_dataset, load_dataset, write_dataset
from confbandit.environment import bucket_of
from confbandit.errors import FormatError, ValidationError


def test_round_trip(tmp_path):
    pairs = generate_bucketed_dataset(20, 4)
    path = tmp_path / "ds.jsonl"
    write_dataset(pairs, str(path))
    back = load_dataset(str(path))
    assert back == pairs


def test_generated_ids_and_buckets():
    pairs = generate_bucketed_dataset(100, 4)
    assert len({p.id for p in pairs}) == 100
    buckets = {bucket_of(p.id, 4) for p in pairs}
    assert buckets == {0, 1, 2, 3}
    # keyword encodes the bucket; tail is digits only
    for p in pairs[:10]:
        toks = p.question.split()
        assert len(set(toks[:-1])) == 1
        assert toks[-1].isdigit()


def test_start_offset_gives_fresh_ids():
    train = generate_bucketed_dataset(50, 4)
    held = generate_bucketed_dataset(25, 4, start=100000)
    assert not {p.id for p in train} & {p.id for p in held}


def test_generate_validation():
    with pytest.raises(ValidationError):
        generate_bucketed_dataset(0, 4)
    with pytest.raises(ValidationError):
        generate_bucketed_dataset(5, 99)


def test_load_rejects_duplicates(tmp_path):
    p = tmp_path / "dup.jsonl"
    p.write_text(
        '{"id": "a", "question": "q", "reference": "r"}\n'
        '{"id": "a", "question": "q2", "reference": "r2"}\n'
    )
    with pytest.raises(FormatError):
        load_dataset(str(p))


def test_load_rejects_missing_fields(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "question": "q"}\n')
    with pytest.raises(FormatError, match="reference"):
        load_dataset(str(p))


def test_load_rejects_bad_json_and_empty(tmp_path):
    p = tmp_path / "broken.jsonl"
    p.write_text("not-json\n")
    with pytest.raises(FormatError):
        load_dataset(str(p))
    p2 = tmp_path / "empty.jsonl"
    p2.write_text("\n\n")
    with pytest.raises(FormatError):
        load_dataset(str(p2))


def test_load_skips_blank_lines(tmp_path):
    p = tmp_path / "gaps.jsonl"
    p.write_text(
        '{"id": "a", "question": "q", "reference": "r"}\n'
        "\n"
        '{"id": "b", "question": "q2", "reference": "r2"}\n'
    )
    assert [x.id for x in load_dataset(str(p))] == ["a", "b"]
