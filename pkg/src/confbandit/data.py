"""Dataset I/O and a synthetic question generator for simulated runs."""

from __future__ import annotations

import json

from .environment import QAPair, bucket_of
from .errors import FormatError, ValidationError

# Bucket keywords for synthetic questions; repeated words dominate the hashed
# embedding so questions from one bucket cluster in context space.
_BUCKET_WORDS = ("alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel")


def load_dataset(path: str) -> list[QAPair]:
    """Read JSONL with keys id/question/reference; ids must be unique."""
    pairs: list[QAPair] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise FormatError(f"{path}:{lineno}: each line must hold a JSON object")
            missing = [k for k in ("id", "question", "reference") if not doc.get(k)]
            if missing:
                raise FormatError(f"{path}:{lineno}: missing or empty {', '.join(missing)}")
            qid = str(doc["id"])
            if qid in seen:
                raise FormatError(f"{path}:{lineno}: duplicate id {qid!r}")
            seen.add(qid)
            try:
                pairs.append(QAPair(id=qid, question=str(doc["question"]), reference=str(doc["reference"])))
            except ValidationError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not pairs:
        raise FormatError(f"{path}: dataset is empty")
    return pairs


def write_dataset(pairs: list[QAPair], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"id": p.id, "question": p.question, "reference": p.reference}))
            fh.write("\n")


def generate_bucketed_dataset(n: int, n_buckets: int, *, start: int = 0) -> list[QAPair]:
    """Deterministic synthetic questions whose text encodes their bucket.

    Bucket membership comes from the same id hash the simulator uses, and
    the bucket keyword is repeated in the question so hashed embeddings
    separate cleanly by bucket.  `start` offsets the id counter, which is
    how held-out questions are drawn from the same distribution without
    overlapping ids.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not 1 <= n_buckets <= len(_BUCKET_WORDS):
        raise ValidationError(f"n_buckets must be in [1, {len(_BUCKET_WORDS)}]")
    pairs = []
    for i in range(start, start + n):
        qid = f"q{i:05d}"
        word = _BUCKET_WORDS[bucket_of(qid, n_buckets)]
        # Keyword-only tokens plus a digits-only tail: buckets share no
        # tokens, so their hashed contexts stay near-orthogonal.
        question = " ".join([word] * 5) + f" {i}"
        pairs.append(QAPair(id=qid, question=question, reference=f"answer {i}"))
    return pairs
