"""Factorized softmax policy over the three configuration axes.

One shared tanh encoder maps the question embedding to a hidden vector h;
three independent stacks of dense layers (ReLU between, linear out) map h to
logits over instructions, temperatures, and step caps.  Sampling tempers the
softmax by tau; recorded log-probabilities and gradients default to the
untempered (tau=1) policy, which is what the REINFORCE update uses.

Gradients are closed-form backpropagation, no autodiff framework involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .config_space import ActionSpace, ActionTriple
from .embedder import Embedding
from .errors import CheckpointError, ValidationError

CHECKPOINT_FORMAT = "confbandit-ckpt-1"
DEFAULT_HIDDEN_WIDTH = 128
DEFAULT_HEAD_WIDTHS = (128, 64)


@dataclass
class DenseLayer:
    """One dense layer; also reused as the per-layer gradient container."""

    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.w.copy(), self.b.copy())


@dataclass
class PolicyParams:
    shared: list[DenseLayer]
    head_p: list[DenseLayer]
    head_t: list[DenseLayer]
    head_s: list[DenseLayer]
    input_width: int
    hidden_width: int

    def stacks(self) -> list[tuple[str, list[DenseLayer]]]:
        return [
            ("shared", self.shared),
            ("head_p", self.head_p),
            ("head_t", self.head_t),
            ("head_s", self.head_s),
        ]

    def head_sizes(self) -> tuple[int, int, int]:
        return (
            self.head_p[-1].w.shape[0],
            self.head_t[-1].w.shape[0],
            self.head_s[-1].w.shape[0],
        )

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            shared=[l.copy() for l in self.shared],
            head_p=[l.copy() for l in self.head_p],
            head_t=[l.copy() for l in self.head_t],
            head_s=[l.copy() for l in self.head_s],
            input_width=self.input_width,
            hidden_width=self.hidden_width,
        )


# Gradients share the PolicyParams layout; the alias marks intent at call sites.
PolicyGrads = PolicyParams


@dataclass
class HeadDistribution:
    logits: np.ndarray
    probabilities: np.ndarray
    tau: float


@dataclass
class PolicyDecision:
    triple: ActionTriple
    logp_p: float
    logp_t: float
    logp_s: float
    hidden: np.ndarray

    @property
    def log_prob(self) -> float:
        return self.logp_p + self.logp_t + self.logp_s


def _glorot(rng: np.random.Generator, out_width: int, in_width: int) -> DenseLayer:
    limit = float(np.sqrt(6.0 / (in_width + out_width)))
    w = rng.uniform(-limit, limit, size=(out_width, in_width))
    return DenseLayer(np.ascontiguousarray(w), np.zeros(out_width, dtype=np.float64))


def init_params(
    space: ActionSpace,
    input_width: int,
    seed: int,
    *,
    hidden_width: int = DEFAULT_HIDDEN_WIDTH,
    head_widths: tuple[int, ...] = DEFAULT_HEAD_WIDTHS,
) -> PolicyParams:
    """Glorot-uniform weights, zero biases, fully determined by the seed."""
    if input_width < 8:
        raise ValidationError(f"input_width must be >= 8, got {input_width}")
    rng = np.random.default_rng(seed)
    shared = [_glorot(rng, hidden_width, input_width)]
    heads = []
    for axis_size in space.axis_sizes():
        widths = (hidden_width, *head_widths, axis_size)
        heads.append([_glorot(rng, o, i) for i, o in zip(widths, widths[1:])])
    return PolicyParams(
        shared=shared,
        head_p=heads[0],
        head_t=heads[1],
        head_s=heads[2],
        input_width=input_width,
        hidden_width=hidden_width,
    )


def zeros_like(params: PolicyParams) -> PolicyGrads:
    out = params.copy()
    for _, stack in out.stacks():
        for layer in stack:
            layer.w[:] = 0.0
            layer.b[:] = 0.0
    return out


def _context_vector(params: PolicyParams, context) -> np.ndarray:
    x = context.values if isinstance(context, Embedding) else np.asarray(context, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.input_width:
        raise ValidationError(
            f"context width {getattr(x, 'shape', None)} does not match input_width {params.input_width}"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError("context contains non-finite values")
    return np.ascontiguousarray(x, dtype=np.float64)


def _forward_stacks(params: PolicyParams, x: np.ndarray):
    """Returns (h, activations per head, logits per head); keeps what backprop needs."""
    h = x
    for layer in params.shared:
        h = K.dense_tanh(layer.w, layer.b, h)
    head_acts: list[list[np.ndarray]] = []
    logits: list[np.ndarray] = []
    for _, stack in params.stacks()[1:]:
        acts = [h]
        a = h
        for layer in stack[:-1]:
            a = K.dense_relu(layer.w, layer.b, a)
            acts.append(a)
        logits.append(K.dense_linear(stack[-1].w, stack[-1].b, a))
        head_acts.append(acts)
    return h, head_acts, logits


def forward(params: PolicyParams, context, tau: float = 1.0):
    """Tempered head distributions (instructions, temperatures, steps)."""
    if not tau > 0.0:
        raise ValidationError(f"tau must be > 0, got {tau}")
    x = _context_vector(params, context)
    _, _, logits = _forward_stacks(params, x)
    return tuple(
        HeadDistribution(logits=l, probabilities=K.softmax(l, tau), tau=tau) for l in logits
    )


def sample_axis(logits: np.ndarray, tau: float, rng: np.random.Generator, size: int | None = None):
    """Draw index/indices from the tempered softmax of one head."""
    probs = K.softmax(logits, tau)
    u = rng.random() if size is None else rng.random(size)
    return K.categorical_from_uniform(probs, u)


def _as_rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def sample(params: PolicyParams, context, tau: float, rng_seed) -> PolicyDecision:
    """Boltzmann-sample each axis at tau; log-probs are recorded at tau=1."""
    if not tau > 0.0:
        raise ValidationError(f"tau must be > 0, got {tau}")
    rng = _as_rng(rng_seed)
    x = _context_vector(params, context)
    h, _, logits = _forward_stacks(params, x)
    idx = [int(sample_axis(l, tau, rng)) for l in logits]
    logps = [float(K.log_softmax(l)[i]) for l, i in zip(logits, idx)]
    return PolicyDecision(
        triple=ActionTriple(idx[0], idx[1], idx[2]),
        logp_p=logps[0],
        logp_t=logps[1],
        logp_s=logps[2],
        hidden=h,
    )


def greedy(params: PolicyParams, context) -> ActionTriple:
    """Per-axis argmax; ties go to the lowest index."""
    x = _context_vector(params, context)
    _, _, logits = _forward_stacks(params, x)
    return ActionTriple(*(int(np.argmax(l)) for l in logits))


def log_prob(params: PolicyParams, context, triple: ActionTriple) -> float:
    """log pi(triple | context) at tau=1: sum of the three head log-probs."""
    x = _context_vector(params, context)
    _, _, logits = _forward_stacks(params, x)
    idx = (triple.instruction_index, triple.temperature_index, triple.steps_index)
    return float(sum(K.log_softmax(l)[i] for l, i in zip(logits, idx)))


def backprop_from_dlogits(params: PolicyParams, context, dlogits: list[np.ndarray]) -> PolicyGrads:
    """Backpropagate given d(objective)/d(logits) per head.

    The shared encoder receives the sum of the three heads' contributions.
    """
    x = _context_vector(params, context)
    h, head_acts, _ = _forward_stacks(params, x)
    grads = zeros_like(params)
    grad_stacks = [grads.head_p, grads.head_t, grads.head_s]
    param_stacks = [params.head_p, params.head_t, params.head_s]
    dh_total = np.zeros_like(h)
    for stack, gstack, acts, dl in zip(param_stacks, grad_stacks, head_acts, dlogits):
        da = np.asarray(dl, dtype=np.float64)
        for li in range(len(stack) - 1, -1, -1):
            dw, db, dx = K.grad_dense(stack[li].w, acts[li], da)
            gstack[li].w[:] = dw
            gstack[li].b[:] = db
            if li > 0:
                da = K.relu_backward(acts[li], dx)
            else:
                dh_total += dx
    # Shared stack: single-writer chain back to the input.
    shared_ins = [x]
    a = x
    for layer in params.shared[:-1]:
        a = K.dense_tanh(layer.w, layer.b, a)
        shared_ins.append(a)
    da = K.tanh_backward(h, dh_total)
    for li in range(len(params.shared) - 1, -1, -1):
        dw, db, dx = K.grad_dense(params.shared[li].w, shared_ins[li], da)
        grads.shared[li].w[:] = dw
        grads.shared[li].b[:] = db
        if li > 0:
            da = K.tanh_backward(shared_ins[li], dx)
    return grads


def grad_log_prob(params: PolicyParams, context, triple: ActionTriple, *, tau: float = 1.0) -> PolicyGrads:
    """Exact gradient of log pi_p + log pi_t + log pi_s w.r.t. all parameters.

    With tau != 1 the gradient is of the tempered log-probability
    (d log softmax(z/tau)[a] / dz = (onehot - probs_tau)/tau).
    """
    x = _context_vector(params, context)
    _, _, logits = _forward_stacks(params, x)
    idx = (triple.instruction_index, triple.temperature_index, triple.steps_index)
    for l, i, name in zip(logits, idx, ("instruction", "temperature", "steps")):
        if not 0 <= i < l.shape[0]:
            raise ValidationError(f"{name} index {i} out of range [0, {l.shape[0]})")
    dlogits = []
    for l, i in zip(logits, idx):
        probs = K.softmax(l, tau)
        d = -probs
        d[i] += 1.0
        if tau != 1.0:
            d /= tau
        dlogits.append(d)
    return backprop_from_dlogits(params, x, dlogits)


def add_scaled_(params: PolicyParams, grads: PolicyGrads, scale: float) -> None:
    """In-place params += scale * grads; no-op when scale is exactly zero."""
    if scale == 0.0:
        return
    for (_, pstack), (_, gstack) in zip(params.stacks(), grads.stacks()):
        for pl, gl in zip(pstack, gstack):
            pl.w += scale * gl.w
            pl.b += scale * gl.b


def flatten_struct(struct: PolicyParams) -> np.ndarray:
    """Concatenate all blocks into one vector (fixed stack/layer order)."""
    parts = []
    for _, stack in struct.stacks():
        for layer in stack:
            parts.append(layer.w.ravel())
            parts.append(layer.b)
    return np.concatenate(parts)


def unflatten_into(vec: np.ndarray, like: PolicyParams) -> PolicyParams:
    out = like.copy()
    pos = 0
    for _, stack in out.stacks():
        for layer in stack:
            n = layer.w.size
            layer.w[:] = vec[pos : pos + n].reshape(layer.w.shape)
            pos += n
            n = layer.b.size
            layer.b[:] = vec[pos : pos + n]
            pos += n
    if pos != vec.size:
        raise ValidationError(f"vector length {vec.size} does not match parameter count {pos}")
    return out


def grad_sq_norm(grads: PolicyGrads) -> float:
    total = 0.0
    for _, stack in grads.stacks():
        for layer in stack:
            total += float(np.dot(layer.w.ravel(), layer.w.ravel()))
            total += float(np.dot(layer.b, layer.b))
    return total


def _check_finite(params: PolicyParams, err) -> None:
    for name, stack in params.stacks():
        for li, layer in enumerate(stack):
            if not (np.all(np.isfinite(layer.w)) and np.all(np.isfinite(layer.b))):
                raise err(f"non-finite weight in {name}[{li}]")


def checkpoint_save(params: PolicyParams, space: ActionSpace, metadata: dict | None = None) -> bytes:
    """Serialize to a deterministic JSON document; floats keep full precision."""
    _check_finite(params, ValidationError)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "space": {
            "steps_values": list(space.steps_values),
            "temperature_values": list(space.temperature_values),
            "base_instructions": list(space.base_instructions),
            "variation_instructions": list(space.variation_instructions),
        },
        "params": {
            "input_width": params.input_width,
            "hidden_width": params.hidden_width,
            **{
                name: [{"w": layer.w.tolist(), "b": layer.b.tolist()} for layer in stack]
                for name, stack in params.stacks()
            },
        },
        "metadata": metadata or {},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _load_stack(doc_stack, in_width: int, name: str) -> list[DenseLayer]:
    if not isinstance(doc_stack, list) or not doc_stack:
        raise CheckpointError(f"stack {name} must be a non-empty list")
    stack = []
    prev = in_width
    for li, entry in enumerate(doc_stack):
        try:
            w = np.ascontiguousarray(np.array(entry["w"], dtype=np.float64))
            b = np.ascontiguousarray(np.array(entry["b"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"bad layer {name}[{li}]: {exc}") from exc
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise CheckpointError(f"shape mismatch in {name}[{li}]")
        if w.shape[1] != prev:
            raise CheckpointError(
                f"{name}[{li}] expects input width {prev}, file has {w.shape[1]}"
            )
        prev = w.shape[0]
        stack.append(DenseLayer(w, b))
    return stack


def checkpoint_load(blob: bytes):
    """Inverse of checkpoint_save; validates format, shapes, and finiteness."""
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"unsupported checkpoint format {doc.get('format') if isinstance(doc, dict) else None!r}"
        )
    try:
        space = ActionSpace(
            steps_values=tuple(doc["space"]["steps_values"]),
            temperature_values=tuple(doc["space"]["temperature_values"]),
            base_instructions=tuple(doc["space"]["base_instructions"]),
            variation_instructions=tuple(doc["space"]["variation_instructions"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad action space in checkpoint: {exc}") from exc
    pdoc = doc.get("params")
    if not isinstance(pdoc, dict):
        raise CheckpointError("missing params block")
    try:
        input_width = int(pdoc["input_width"])
        hidden_width = int(pdoc["hidden_width"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad width fields: {exc}") from exc
    shared = _load_stack(pdoc.get("shared"), input_width, "shared")
    if shared[-1].w.shape[0] != hidden_width:
        raise CheckpointError("shared stack output width does not match hidden_width")
    heads = {}
    for name, axis_size in zip(("head_p", "head_t", "head_s"), space.axis_sizes()):
        stack = _load_stack(pdoc.get(name), hidden_width, name)
        if stack[-1].w.shape[0] != axis_size:
            raise CheckpointError(
                f"{name} output width {stack[-1].w.shape[0]} does not match axis size {axis_size}"
            )
        heads[name] = stack
    params = PolicyParams(
        shared=shared,
        head_p=heads["head_p"],
        head_t=heads["head_t"],
        head_s=heads["head_s"],
        input_width=input_width,
        hidden_width=hidden_width,
    )
    _check_finite(params, CheckpointError)
    metadata = doc.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise CheckpointError("metadata must be an object")
    return params, space, metadata
