"""Question-to-vector encoders used as the policy context.

Three sources, one contract: a fixed-width, L2-normalized float vector.
The built-in encoder is signed feature hashing (FNV-1a over word tokens and
character trigrams), which is deterministic across platforms and needs no
model weights.  Precomputed vectors (e.g. real BERT output) and a remote
embedding endpoint are accepted as drop-in replacements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _http
from .errors import FormatError, ValidationError

DEFAULT_WIDTH = 768
DEFAULT_HASH_SEED = 0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Embedding:
    """A unit-norm context vector plus a tag naming where it came from."""

    values: np.ndarray
    source_tag: str  # hashed | precomputed | remote

    @property
    def width(self) -> int:
        return int(self.values.shape[0])


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a; the seed is folded in as an 8-byte prefix."""
    h = _FNV_OFFSET
    if seed:
        for b in int(seed & _MASK64).to_bytes(8, "little"):
            h = ((h ^ b) * _FNV_PRIME) & _MASK64
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _finalize(vec: np.ndarray, tag: str) -> Embedding:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise ValidationError(f"embedding must be a vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise FormatError("embedding contains non-finite values")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Degenerate all-cancelling input; pin a fixed direction instead of
        # dividing by zero so the output still satisfies the unit-norm contract.
        vec = vec.copy()
        vec[0] = 1.0
        norm = 1.0
    return Embedding(values=vec / norm, source_tag=tag)


def embed_hashed(question: str, width: int = DEFAULT_WIDTH, *, seed: int = DEFAULT_HASH_SEED) -> Embedding:
    """Hash word tokens and character trigrams into signed buckets, then normalize."""
    if not question or not question.strip():
        raise ValidationError("question must be non-empty")
    if width < 8:
        raise ValidationError(f"width must be >= 8, got {width}")
    text = question.lower()
    features = ["t:" + tok for tok in text.split()]
    features += ["g:" + text[i : i + 3] for i in range(len(text) - 2)]
    vec = np.zeros(width, dtype=np.float64)
    for feat in features:
        h = fnv1a64(feat.encode("utf-8"), seed)
        sign = 1.0 if h & 1 else -1.0
        vec[(h >> 1) % width] += sign
    return _finalize(vec, "hashed")


def load_precomputed(path: str) -> dict[str, Embedding]:
    """Read `id<TAB>v1,v2,...` lines; every record must share one width."""
    out: dict[str, Embedding] = {}
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise FormatError(f"{path}:{lineno}: expected `id<TAB>v1,v2,...`")
            qid, payload = parts
            if qid in out:
                raise FormatError(f"{path}:{lineno}: duplicate id {qid!r}")
            try:
                vec = np.array([float(v) for v in payload.split(",")], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad value ({exc})") from exc
            if not np.all(np.isfinite(vec)):
                raise FormatError(f"{path}:{lineno}: non-finite value")
            if width is None:
                width = vec.shape[0]
            elif vec.shape[0] != width:
                raise FormatError(
                    f"{path}:{lineno}: width {vec.shape[0]} != first record width {width}"
                )
            out[qid] = _finalize(vec, "precomputed")
    return out


def embed_remote(
    question: str,
    endpoint: "_http.EndpointConfig | str",
    *,
    expected_width: int | None = None,
) -> Embedding:
    """POST {"input": question} and normalize the returned vector."""
    if not question or not question.strip():
        raise ValidationError("question must be non-empty")
    if isinstance(endpoint, str):
        endpoint = _http.EndpointConfig(url=endpoint)
    doc = _http.post_json(endpoint, {"input": question})
    values = doc.get("embedding")
    if not isinstance(values, list) or not values:
        raise FormatError("embedding endpoint response missing 'embedding' list")
    try:
        vec = np.array([float(v) for v in values], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"embedding endpoint returned non-numeric values: {exc}") from exc
    if expected_width is not None and vec.shape[0] != expected_width:
        raise FormatError(f"embedding width {vec.shape[0]} != expected {expected_width}")
    return _finalize(vec, "remote")
