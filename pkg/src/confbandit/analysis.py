"""Post-hoc diagnostics for simulated runs.

Three families of checks:

* regret: instantaneous/cumulative regret against the noiseless mean table,
  plus a growth-shape test separating sqrt-K from linear traces;
* convergence: both sides of the nonconvex-SGD bound
  (1/K) sum ||grad J||^2 <= 2(J* - J0)/(eta K) + L eta sigma^2,
  with J evaluated in closed form for the factorized policy on a simulated
  table, L estimated from gradient-difference ratios, and sigma^2 from the
  empirical spread of the REINFORCE estimator;
* action statistics and CSV/JSON export for plotting.

Everything here requires the simulated environment's mean table; live runs
have no ground-truth means to diff against.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import policy
from .config_space import ActionSpace, ActionTriple
from .embedder import Embedding, embed_hashed
from .environment import SimSpec
from .errors import FormatError, ValidationError
from .trainer import TrainReport, Transition

SUBLINEAR_RATIO_THRESHOLD = 1.6


# ---------------------------------------------------------------------------
# regret


@dataclass
class RegretTrace:
    deltas: np.ndarray        # instantaneous regret per step
    cumulative: np.ndarray    # running sum of deltas
    arm_pulls: np.ndarray     # counts over the flat joint index
    joint_size: int

    @property
    def steps(self) -> int:
        return int(self.deltas.shape[0])

    @property
    def total(self) -> float:
        return float(self.cumulative[-1]) if self.steps else 0.0


def compute_regret(transitions: list[Transition], spec: SimSpec | None) -> RegretTrace:
    """Exact per-step regret from the noiseless mean table."""
    if spec is None:
        raise ValidationError("regret needs the simulated mean table; live runs have none")
    if not transitions:
        raise ValidationError("no transitions to analyze")
    n_p, n_t, n_s = spec.axis_sizes()
    joint = n_p * n_t * n_s
    deltas = np.empty(len(transitions), dtype=np.float64)
    pulls = np.zeros(joint, dtype=np.int64)
    for i, t in enumerate(transitions):
        b = spec.bucket_of(t.question_id)
        deltas[i] = spec.optimal_value(b) - spec.mean_reward(b, t.triple)
        flat = (t.triple.instruction_index * n_t + t.triple.temperature_index) * n_s + t.triple.steps_index
        pulls[flat] += 1
    return RegretTrace(
        deltas=deltas, cumulative=np.cumsum(deltas), arm_pulls=pulls, joint_size=joint
    )


@dataclass
class SublinearityReport:
    ratios: list[float]
    mean_ratio: float
    threshold: float
    is_sublinear: bool
    fitted_c: float
    prefix_steps: list[int]


def sublinearity_check(
    trace: RegretTrace, *, threshold: float = SUBLINEAR_RATIO_THRESHOLD, n_doublings: int = 3
) -> SublinearityReport:
    """Doubling ratios R(2K)/R(K) over trailing prefixes of the trace.

    sqrt-K growth doubles regret by ~1.41, linear growth by 2.0; the
    threshold splits the two.  Prefixes with zero regret count as ratio 1.0
    when the doubled prefix is also zero (a perfect policy is trivially
    sublinear) and as 2.0 otherwise.
    """
    k = trace.steps
    if k < 1000:
        raise ValidationError(f"trace too short for a growth check: {k} < 1000 steps")
    if n_doublings < 1:
        raise ValidationError("n_doublings must be >= 1")
    prefixes = [k >> i for i in range(n_doublings, -1, -1)]
    if prefixes[0] < 1:
        raise ValidationError(f"trace too short for {n_doublings} doublings")
    ratios = []
    for small, big in zip(prefixes, prefixes[1:]):
        r_small = float(trace.cumulative[small - 1])
        r_big = float(trace.cumulative[big - 1])
        if r_small <= 0.0:
            ratios.append(1.0 if r_big <= 0.0 else 2.0)
        else:
            ratios.append(r_big / r_small)
    mean_ratio = float(np.mean(ratios))
    # Least-squares fit of R(K) ~ c * sqrt(K |A| ln|A|) over the whole trace.
    scale = np.sqrt(
        np.arange(1, k + 1, dtype=np.float64) * trace.joint_size * math.log(trace.joint_size)
    )
    denom = float(scale @ scale)
    fitted_c = float((trace.cumulative @ scale) / denom) if denom > 0 else 0.0
    return SublinearityReport(
        ratios=ratios,
        mean_ratio=mean_ratio,
        threshold=threshold,
        is_sublinear=mean_ratio <= threshold,
        fitted_c=fitted_c,
        prefix_steps=prefixes,
    )


# ---------------------------------------------------------------------------
# convergence (nonconvex SGD bound)


def _norm_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))


def _norm_pdf(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def effective_mean_table(spec: SimSpec) -> np.ndarray:
    """Expected clipped reward per arm: E[clip(mu + sigma Z, 0, 1)].

    This is the mean the REINFORCE estimator actually sees, so the exact
    objective/gradient below are unbiased references for it.  With sigma=0
    it is the mean table itself.
    """
    if spec.noise_sigma == 0.0:
        return spec.mean_table.copy()
    mu = spec.mean_table
    sigma = spec.noise_sigma
    alpha = (0.0 - mu) / sigma
    beta = (1.0 - mu) / sigma
    cdf_a, cdf_b = _norm_cdf(alpha), _norm_cdf(beta)
    pdf_a, pdf_b = _norm_pdf(alpha), _norm_pdf(beta)
    return (1.0 - cdf_b) + mu * (cdf_b - cdf_a) + sigma * (pdf_a - pdf_b)


def _context_rows(params, spec, dataset, embed):
    """Unique (bucket, context vector) rows in dataset order."""
    if embed is None:
        width = params.input_width

        def embed(question: str) -> Embedding:
            return embed_hashed(question, width)

    rows = []
    seen = set()
    for pair in dataset:
        if pair.id in seen:
            continue
        seen.add(pair.id)
        emb = embed(pair.question)
        x = emb.values if isinstance(emb, Embedding) else np.asarray(emb, dtype=np.float64)
        rows.append((spec.bucket_of(pair.id), x))
    return rows


def exact_objective_and_grad(
    params: policy.PolicyParams, table: np.ndarray, contexts: list[tuple[int, np.ndarray]]
):
    """Closed-form J(theta) and its gradient for the factorized policy.

    J = mean_q sum_a pi_p pi_t pi_s * table[bucket_q, a].  The head-logit
    gradient contracts to pi * (per-axis marginal mean - J_q), so one
    backprop per context suffices.
    """
    if not contexts:
        raise ValidationError("contexts must be non-empty")
    total_j = 0.0
    total_grad: np.ndarray | None = None
    for bucket, x in contexts:
        dists = policy.forward(params, x, 1.0)
        pp, pt, ps = (d.probabilities for d in dists)
        mu = table[bucket]
        m_p = np.einsum("j,k,ijk->i", pt, ps, mu)
        m_t = np.einsum("i,k,ijk->j", pp, ps, mu)
        m_s = np.einsum("i,j,ijk->k", pp, pt, mu)
        j_q = float(pp @ m_p)
        dlogits = [pp * (m_p - j_q), pt * (m_t - j_q), ps * (m_s - j_q)]
        grads = policy.backprop_from_dlogits(params, x, dlogits)
        flat = policy.flatten_struct(grads)
        total_j += j_q
        total_grad = flat if total_grad is None else total_grad + flat
    n = len(contexts)
    return total_j / n, total_grad / n


@dataclass
class ConvergenceReport:
    steps: int
    eta: float
    mean_sq_grad_norm: float          # (1/K) sum ||grad J||^2, exact J at snapshots
    mean_sq_stochastic_norm: float    # same average over recorded ||r grad log pi||^2
    j_initial: float
    j_final: float
    j_star_upper: float               # perfect-policy value, upper-bounds sup J
    l_hat: float
    sigma_sq_hat: float
    sigma_sq_se: float
    bound_first_term: float
    bound_second_term: float
    bound_total: float
    margin: float
    eta_within_smoothness: bool       # eta <= 1/l_hat
    holds: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def convergence_report(
    report: TrainReport,
    spec: SimSpec,
    dataset,
    *,
    embed=None,
    n_sigma_samples: int = 256,
    n_l_pairs: int = 20,
    perturb_scale: float = 0.05,
    rng_seed: int = 0,
) -> ConvergenceReport:
    """Evaluate both sides of the nonconvex-SGD bound on a simulated run.

    Needs snapshots in the train report (train(..., snapshot_every=...)).
    The left side averages exact squared gradient norms over pre-update
    snapshots; the right side combines the closed-form objective range, the
    max gradient-difference ratio L-hat near the trajectory, and the
    empirical estimator variance sigma^2-hat (max over snapshots).
    """
    if not report.snapshots:
        raise ValidationError("convergence_report needs snapshots; rerun train with snapshot_every")
    params0 = report.initial_params
    contexts = _context_rows(params0, spec, dataset, embed)
    table = effective_mean_table(spec)
    k_total = report.steps
    eta = report.config.learning_rate
    rng = np.random.default_rng(rng_seed)

    snap_grads: list[tuple[int, np.ndarray]] = []
    j_by_step: dict[int, float] = {}
    for step, snap_params in report.snapshots:
        j, g = exact_objective_and_grad(snap_params, table, contexts)
        j_by_step[step] = j
        snap_grads.append((step, g))
    pre_update = [float(g @ g) for step, g in snap_grads if step < k_total]
    if not pre_update:
        pre_update = [float(snap_grads[0][1] @ snap_grads[0][1])]
    mean_sq_grad = float(np.mean(pre_update))
    lhs_se = float(np.std(pre_update) / math.sqrt(len(pre_update))) if len(pre_update) > 1 else 0.0

    j_initial = j_by_step[report.snapshots[0][0]]
    j_final, _ = exact_objective_and_grad(report.final_params, table, contexts)
    # Perfect-policy value upper-bounds sup_theta J(theta).
    j_star_upper = float(np.mean([table[b].max() for b, _ in contexts]))

    # L-hat: max gradient-difference ratio over random pairs near snapshots.
    dim = policy.flatten_struct(params0).size
    l_hat = 0.0
    for _ in range(n_l_pairs):
        step, snap_params = report.snapshots[int(rng.integers(len(report.snapshots)))]
        base = policy.flatten_struct(snap_params)
        delta_a = rng.normal(0.0, perturb_scale / math.sqrt(dim), size=dim)
        delta_b = rng.normal(0.0, perturb_scale / math.sqrt(dim), size=dim)
        pa = policy.unflatten_into(base + delta_a, snap_params)
        pb = policy.unflatten_into(base + delta_b, snap_params)
        _, ga = exact_objective_and_grad(pa, table, contexts)
        _, gb = exact_objective_and_grad(pb, table, contexts)
        gap = float(np.linalg.norm(delta_a - delta_b))
        if gap > 0.0:
            l_hat = max(l_hat, float(np.linalg.norm(ga - gb)) / gap)

    # sigma^2-hat: empirical spread of g = r grad log pi around the exact gradient.
    sigma_sq_hat = 0.0
    sigma_sq_se = 0.0
    for step, snap_params in report.snapshots:
        g_exact = next(g for s, g in snap_grads if s == step)
        sq_devs = np.empty(n_sigma_samples)
        for i in range(n_sigma_samples):
            bucket, x = contexts[int(rng.integers(len(contexts)))]
            decision = policy.sample(snap_params, x, 1.0, rng)
            mu = spec.mean_table[
                bucket,
                decision.triple.instruction_index,
                decision.triple.temperature_index,
                decision.triple.steps_index,
            ]
            r = float(mu)
            if spec.noise_sigma > 0.0:
                r = float(np.clip(r + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0))
            g = r * policy.flatten_struct(
                policy.grad_log_prob(snap_params, x, decision.triple)
            )
            diff = g - g_exact
            sq_devs[i] = float(diff @ diff)
        snap_sigma = float(np.mean(sq_devs))
        if snap_sigma > sigma_sq_hat:
            sigma_sq_hat = snap_sigma
            sigma_sq_se = float(np.std(sq_devs) / math.sqrt(n_sigma_samples))

    bound_first = 2.0 * (j_star_upper - j_initial) / (eta * k_total)
    bound_second = l_hat * eta * sigma_sq_hat
    bound_total = bound_first + bound_second
    margin = 3.0 * (sigma_sq_se * l_hat * eta) + 3.0 * lhs_se
    mean_stochastic = (
        float(np.mean(report.gradient_sq_norm_curve)) if report.steps else 0.0
    )
    return ConvergenceReport(
        steps=k_total,
        eta=eta,
        mean_sq_grad_norm=mean_sq_grad,
        mean_sq_stochastic_norm=mean_stochastic,
        j_initial=j_initial,
        j_final=j_final,
        j_star_upper=j_star_upper,
        l_hat=l_hat,
        sigma_sq_hat=sigma_sq_hat,
        sigma_sq_se=sigma_sq_se,
        bound_first_term=bound_first,
        bound_second_term=bound_second,
        bound_total=bound_total,
        margin=margin,
        eta_within_smoothness=bool(l_hat > 0.0 and eta <= 1.0 / l_hat),
        holds=bool(mean_sq_grad <= bound_total + margin),
    )


# ---------------------------------------------------------------------------
# action statistics


@dataclass
class ActionStats:
    instruction_hist: np.ndarray
    temperature_hist: np.ndarray
    steps_hist: np.ndarray
    steps_mean: float
    steps_std: float
    temperature_mean: float
    temperature_std: float
    top_instructions: list[tuple[int, int]]  # (instruction_index, count)
    n_decisions: int


def _triple_of(item) -> ActionTriple:
    if isinstance(item, ActionTriple):
        return item
    triple = getattr(item, "triple", None)
    if isinstance(triple, ActionTriple):
        return triple
    raise ValidationError(f"cannot extract an action triple from {type(item).__name__}")


def action_stats(items, space: ActionSpace, *, top_n: int = 5) -> ActionStats:
    """Selection histograms and resolved-value moments over decisions."""
    triples = [_triple_of(it) for it in items]
    if not triples:
        raise ValidationError("no decisions to summarize")
    n_p, n_t, n_s = space.axis_sizes()
    hist_p = np.zeros(n_p, dtype=np.int64)
    hist_t = np.zeros(n_t, dtype=np.int64)
    hist_s = np.zeros(n_s, dtype=np.int64)
    steps_vals = np.empty(len(triples))
    temp_vals = np.empty(len(triples))
    for i, tr in enumerate(triples):
        hist_p[tr.instruction_index] += 1
        hist_t[tr.temperature_index] += 1
        hist_s[tr.steps_index] += 1
        steps_vals[i] = space.steps_values[tr.steps_index]
        temp_vals[i] = space.temperature_values[tr.temperature_index]
    order = sorted(range(n_p), key=lambda i: (-hist_p[i], i))
    top = [(i, int(hist_p[i])) for i in order[:top_n] if hist_p[i] > 0]
    return ActionStats(
        instruction_hist=hist_p,
        temperature_hist=hist_t,
        steps_hist=hist_s,
        steps_mean=float(steps_vals.mean()),
        steps_std=float(steps_vals.std()),
        temperature_mean=float(temp_vals.mean()),
        temperature_std=float(temp_vals.std()),
        top_instructions=top,
        n_decisions=len(triples),
    )


# ---------------------------------------------------------------------------
# joint oracle


JOINT_ORACLE_LIMIT = 1000


def joint_oracle(space: ActionSpace, spec: SimSpec, contexts=None) -> dict[int, ActionTriple]:
    """Brute-force best joint triple per context bucket over the mean table.

    Deliberately a plain triple loop with strict-improvement comparison, so
    it is an independent oracle for the factorized policy rather than a
    restatement of the argmax used elsewhere.  Ties keep the lowest flat
    index.  Guarded to small spaces.
    """
    if space.joint_size > JOINT_ORACLE_LIMIT:
        raise ValidationError(
            f"joint_oracle is capped at |A| <= {JOINT_ORACLE_LIMIT}, got {space.joint_size}"
        )
    if space.axis_sizes() != spec.axis_sizes():
        raise ValidationError(
            f"space axes {space.axis_sizes()} do not match sim table axes {spec.axis_sizes()}"
        )
    buckets = list(range(spec.n_buckets)) if contexts is None else list(contexts)
    out: dict[int, ActionTriple] = {}
    for b in buckets:
        best = None
        best_val = -1.0
        for p in range(space.num_instructions):
            for t in range(space.num_temperatures):
                for s in range(space.num_steps):
                    val = float(spec.mean_table[b, p, t, s])
                    if val > best_val:
                        best_val = val
                        best = ActionTriple(p, t, s)
        out[b] = best
    return out


# ---------------------------------------------------------------------------
# export


def _fmt(value: float) -> str:
    return repr(float(value))


TRANSITIONS_HEADER = [
    "k", "question_id", "instruction_index", "temperature_index", "steps_index",
    "reward", "logp_p", "logp_t", "logp_s", "tau", "grad_sq_norm",
]

REGRET_HEADER = ["k", "tau", "reward", "regret", "cum_regret", "grad_sq_norm"]


def write_transitions_csv(path: str, transitions: list[Transition]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSITIONS_HEADER)
        for t in transitions:
            w.writerow([
                t.k, t.question_id,
                t.triple.instruction_index, t.triple.temperature_index, t.triple.steps_index,
                _fmt(t.reward), _fmt(t.logp_p), _fmt(t.logp_t), _fmt(t.logp_s),
                _fmt(t.tau_used), _fmt(t.grad_sq_norm),
            ])


def read_transitions_csv(path: str) -> list[Transition]:
    out: list[Transition] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRANSITIONS_HEADER:
            raise FormatError(f"{path}: unexpected transitions header {header}")
        for row in reader:
            if len(row) != len(TRANSITIONS_HEADER):
                raise FormatError(f"{path}: bad row length {len(row)}")
            try:
                out.append(
                    Transition(
                        question_id=row[1],
                        triple=ActionTriple(int(row[2]), int(row[3]), int(row[4])),
                        reward=float(row[5]),
                        logp_p=float(row[6]),
                        logp_t=float(row[7]),
                        logp_s=float(row[8]),
                        tau_used=float(row[9]),
                        k=int(row[0]),
                        grad_sq_norm=float(row[10]),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}: bad row ({exc})") from exc
    return out


def write_regret_csv(path: str, transitions: list[Transition], trace: RegretTrace) -> None:
    if len(transitions) != trace.steps:
        raise ValidationError("transitions and regret trace disagree on length")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGRET_HEADER)
        for t, delta, cum in zip(transitions, trace.deltas, trace.cumulative):
            w.writerow([
                t.k, _fmt(t.tau_used), _fmt(t.reward),
                _fmt(delta), _fmt(cum), _fmt(t.grad_sq_norm),
            ])


def write_summary_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
