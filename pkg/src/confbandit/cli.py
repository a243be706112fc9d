"""Command-line entry point.

Subcommands:

* train     - REINFORCE training on a JSONL dataset (simulated or live rewards)
* infer     - greedy decisions from a checkpoint, optionally calling the LLM
* simulate  - self-contained simulated run plus full diagnostics
* analyze   - recompute regret/statistics from a stored run directory

One root seed (--seed) is split per subsystem via SeedSequence spawning:
children 0/1/2 drive parameter init, action sampling, and shuffling inside
the trainer; child 3 drives simulator noise.  The run manifest records the
root seed, the resolved settings, and the kernel backend, which is enough to
reproduce a simulated run byte for byte on the same backend.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys

import numpy as np

from . import analysis, data, kernels, policy, trainer
from .config_space import build_default_space, load_space, resolve
from .embedder import DEFAULT_HASH_SEED, DEFAULT_WIDTH, embed_hashed
from .environment import (
    LiveEnvironment,
    QAPair,
    SimEnvironment,
    SimSpec,
    endpoints_from_env,
    llm_generate,
)
from .errors import ConfBanditError, FormatError, ValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

MANIFEST_FORMAT = "confbandit-manifest-1"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _noise_rng(root_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(root_seed).spawn(4)[3])


def _space_from_args(args) -> tuple:
    if getattr(args, "space", None):
        return load_space(args.space), {"file": os.path.abspath(args.space)}
    return build_default_space(), "default"


def _space_from_doc(doc):
    from .config_space import ActionSpace

    if doc == "default":
        return build_default_space()
    if isinstance(doc, dict) and "file" in doc:
        return load_space(doc["file"])
    if isinstance(doc, dict):
        return ActionSpace(
            steps_values=tuple(doc["steps_values"]),
            temperature_values=tuple(doc["temperature_values"]),
            base_instructions=tuple(doc["base_instructions"]),
            variation_instructions=tuple(doc["variation_instructions"]),
        )
    raise FormatError(f"unusable space entry in manifest: {doc!r}")


def _space_doc(space) -> dict:
    return {
        "steps_values": list(space.steps_values),
        "temperature_values": list(space.temperature_values),
        "base_instructions": list(space.base_instructions),
        "variation_instructions": list(space.variation_instructions),
    }


def _train_config_from_args(args) -> trainer.TrainConfig:
    base = {}
    if getattr(args, "config", None):
        base = trainer.TrainConfig.from_file(args.config).to_dict()
        if base.get("rescale_to") is not None:
            base["rescale_to"] = tuple(base["rescale_to"])
    overrides = {
        "learning_rate": getattr(args, "lr", None),
        "trials_per_question": getattr(args, "trials", None),
        "tau0": getattr(args, "tau0", None),
        "tau_min": getattr(args, "tau_min", None),
        "seed": getattr(args, "seed", None),
    }
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    return trainer.TrainConfig(**base)


def _sim_spec_from_settings(space, sim: dict) -> SimSpec:
    kind = sim.get("kind", "dominant")
    if kind == "dominant":
        return SimSpec.with_dominant_arms(
            space,
            buckets=int(sim.get("buckets", 4)),
            dominant_reward=float(sim.get("dominant_reward", 1.0)),
            other_reward=float(sim.get("other_reward", 0.3)),
            noise_sigma=float(sim.get("noise_sigma", 0.05)),
            seed=int(sim.get("table_seed", 0)),
        )
    if kind == "additive":
        return SimSpec.additive(
            space,
            buckets=int(sim.get("buckets", 4)),
            base=float(sim.get("base", 0.1)),
            axis_gap=float(sim.get("axis_gap", 0.25)),
            noise_sigma=float(sim.get("noise_sigma", 0.02)),
            seed=int(sim.get("table_seed", 0)),
        )
    if kind == "random":
        return SimSpec.uniform_random(
            space,
            buckets=int(sim.get("buckets", 4)),
            noise_sigma=float(sim.get("noise_sigma", 0.05)),
            seed=int(sim.get("table_seed", 0)),
        )
    raise ValidationError(f"unknown sim kind {kind!r}")


def _sim_settings_from_args(args) -> dict:
    return {
        "kind": getattr(args, "sim_kind", "dominant"),
        "buckets": getattr(args, "buckets", 4),
        "noise_sigma": getattr(args, "sigma", 0.05),
        "dominant_reward": getattr(args, "dominant_reward", 1.0),
        "other_reward": getattr(args, "other_reward", 0.3),
        "table_seed": getattr(args, "seed", 0),
    }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_manifest(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_manifest(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"manifest {path!r} has unsupported format")
    return doc


def _checkpoint_metadata(config: trainer.TrainConfig, alpha: float, width: int) -> dict:
    return {
        "embedder": {"kind": "hashed", "width": width, "hash_seed": DEFAULT_HASH_SEED},
        "train": {**config.to_dict(), "alpha_resolved": alpha},
        "backend": kernels.BACKEND,
    }


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    dataset = data.load_dataset(args.dataset)
    space, space_doc = _space_from_args(args)
    config = _train_config_from_args(args)
    if args.env == "sim":
        sim_settings = _sim_settings_from_args(args)
        spec = _sim_spec_from_settings(space, sim_settings)
        env = SimEnvironment(spec, _noise_rng(config.seed))
    else:
        endpoints = endpoints_from_env()
        if "llm" not in endpoints or "reward" not in endpoints:
            raise ValidationError(
                "live training needs CONFBANDIT_LLM_URL and CONFBANDIT_REWARD_URL"
            )
        sim_settings = None
        env = LiveEnvironment(endpoints["llm"], endpoints["reward"], scoring=args.scoring)

    started = _now()
    report = trainer.train(
        dataset,
        env,
        config,
        space=space,
        input_width=args.width,
        shuffle_seed=args.shuffle,
    )
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = args.checkpoint or os.path.join(args.out, "checkpoint.json")
    blob = policy.checkpoint_save(
        report.final_params, space, _checkpoint_metadata(config, report.alpha, args.width)
    )
    with open(ckpt_path, "wb") as fh:
        fh.write(blob)
    analysis.write_transitions_csv(os.path.join(args.out, "transitions.csv"), report.transitions)
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": "train",
        "backend": kernels.BACKEND,
        "root_seed": config.seed,
        "space": space_doc,
        "train": {**config.to_dict(), "alpha_resolved": report.alpha},
        "input_width": args.width,
        "shuffle_seed": args.shuffle,
        "env": args.env,
        "sim": sim_settings,
        "dataset": {"path": os.path.abspath(args.dataset), "n": len(dataset)},
        "endpoints": {
            "llm": os.environ.get("CONFBANDIT_LLM_URL"),
            "reward": os.environ.get("CONFBANDIT_REWARD_URL"),
        } if args.env == "live" else None,
        "checkpoint": os.path.abspath(ckpt_path),
        "started_at": started,
        "finished_at": _now(),
    }
    _write_manifest(os.path.join(args.out, "manifest.json"), manifest)
    mean_r = float(report.rewards.mean()) if report.steps else 0.0
    print(f"trained {report.steps} steps over {len(dataset)} questions; mean reward {mean_r:.4f}")
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer


def _embed_from_metadata(metadata: dict, params: policy.PolicyParams):
    emb = metadata.get("embedder") or {}
    width = int(emb.get("width", params.input_width))
    hash_seed = int(emb.get("hash_seed", DEFAULT_HASH_SEED))

    def embed(question: str):
        return embed_hashed(question, width, seed=hash_seed)

    return embed


def cmd_infer(args) -> int:
    with open(args.checkpoint, "rb") as fh:
        params, space, metadata = policy.checkpoint_load(fh.read())
    embed = _embed_from_metadata(metadata, params)
    if args.question:
        pairs = [("q0", args.question)]
    else:
        pairs = [(p.id, p.question) for p in data.load_dataset(args.dataset)]
    live_endpoint = None
    if args.live:
        endpoints = endpoints_from_env()
        if "llm" not in endpoints:
            raise ValidationError("--live needs CONFBANDIT_LLM_URL")
        live_endpoint = endpoints["llm"]
    for qid, question in pairs:
        triple = policy.greedy(params, embed(question).values)
        rendered = resolve(space, triple)
        answer = None
        if live_endpoint is not None:
            answer = llm_generate(live_endpoint, QAPair(qid, question, "-"), rendered)
        if args.json:
            doc = {
                "id": qid,
                "instruction_index": triple.instruction_index,
                "temperature_index": triple.temperature_index,
                "steps_index": triple.steps_index,
                "instruction": rendered.instruction_text,
                "temperature": rendered.temperature,
                "steps": rendered.steps,
            }
            if answer is not None:
                doc["answer"] = answer
            print(json.dumps(doc, sort_keys=True))
        else:
            print(
                f"{qid}\tinstruction_index={triple.instruction_index} "
                f"temperature={rendered.temperature} steps={rendered.steps}"
            )
            if answer is not None:
                print(answer)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _run_simulation(settings: dict, out_dir: str) -> int:
    space = _space_from_doc(settings["space"])
    config = trainer.TrainConfig.from_dict(settings["train"])
    spec = _sim_spec_from_settings(space, settings["sim"])
    n_questions = int(settings["dataset"]["n"])
    holdout = int(settings["dataset"].get("holdout", 50))
    width = int(settings["input_width"])
    snapshot_every = settings.get("snapshot_every")
    shuffle_seed = settings.get("shuffle_seed")

    dataset = data.generate_bucketed_dataset(n_questions, spec.n_buckets)
    env = SimEnvironment(spec, _noise_rng(config.seed))
    started = _now()
    report = trainer.train(
        dataset,
        env,
        config,
        space=space,
        input_width=width,
        snapshot_every=snapshot_every,
        shuffle_seed=shuffle_seed,
    )

    os.makedirs(out_dir, exist_ok=True)
    analysis.write_transitions_csv(os.path.join(out_dir, "transitions.csv"), report.transitions)
    trace = analysis.compute_regret(report.transitions, spec)
    analysis.write_regret_csv(os.path.join(out_dir, "regret.csv"), report.transitions, trace)

    sublinearity = None
    if trace.steps >= 1000:
        sub = analysis.sublinearity_check(trace)
        sublinearity = {
            "ratios": sub.ratios,
            "mean_ratio": sub.mean_ratio,
            "threshold": sub.threshold,
            "is_sublinear": sub.is_sublinear,
            "fitted_c": sub.fitted_c,
            "prefix_steps": sub.prefix_steps,
        }
    convergence = None
    if report.snapshots:
        convergence = analysis.convergence_report(report, spec, dataset).to_dict()
    stats = analysis.action_stats(report.transitions, space)

    held = data.generate_bucketed_dataset(holdout, spec.n_buckets, start=100000)
    hits = 0
    for pair in held:
        triple = policy.greedy(report.final_params, embed_hashed(pair.question, width).values)
        if triple == spec.optimal_arm(spec.bucket_of(pair.id)):
            hits += 1
    holdout_accuracy = hits / len(held) if held else 0.0

    blob = policy.checkpoint_save(
        report.final_params, space, _checkpoint_metadata(config, report.alpha, width)
    )
    with open(os.path.join(out_dir, "checkpoint.json"), "wb") as fh:
        fh.write(blob)

    summary = {
        "steps": report.steps,
        "mean_reward": float(report.rewards.mean()),
        "final_mean_reward_last_10pct": float(
            report.rewards[-max(1, report.steps // 10):].mean()
        ),
        "cumulative_regret": trace.total,
        "sublinearity": sublinearity,
        "convergence": convergence,
        "holdout_accuracy": holdout_accuracy,
        "action_stats": {
            "steps_mean": stats.steps_mean,
            "steps_std": stats.steps_std,
            "temperature_mean": stats.temperature_mean,
            "temperature_std": stats.temperature_std,
            "top_instructions": stats.top_instructions,
            "n_decisions": stats.n_decisions,
        },
        "backend": kernels.BACKEND,
    }
    analysis.write_summary_json(os.path.join(out_dir, "summary.json"), summary)
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": "simulate",
        "backend": kernels.BACKEND,
        "root_seed": config.seed,
        **{k: settings[k] for k in ("space", "train", "sim", "dataset", "input_width")},
        "snapshot_every": snapshot_every,
        "shuffle_seed": shuffle_seed,
        "started_at": started,
        "finished_at": _now(),
    }
    _write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    print(
        f"simulated {report.steps} steps; mean reward {summary['mean_reward']:.4f}; "
        f"cumulative regret {trace.total:.2f}; holdout accuracy {holdout_accuracy:.2%}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.manifest:
        doc = _load_manifest(args.manifest)
        if doc.get("command") != "simulate":
            raise FormatError("manifest does not describe a simulate run")
        try:
            settings = {
                k: doc[k]
                for k in ("space", "train", "sim", "dataset", "input_width")
            }
        except KeyError as exc:
            raise FormatError(f"manifest is missing {exc}") from exc
        settings["snapshot_every"] = doc.get("snapshot_every")
        settings["shuffle_seed"] = doc.get("shuffle_seed")
        return _run_simulation(settings, args.out)
    space, space_doc = _space_from_args(args)
    config = _train_config_from_args(args)
    total = args.questions * config.trials_per_question
    snapshot_every = args.snapshot_every or max(1, total // 20)
    settings = {
        "space": space_doc if space_doc == "default" else _space_doc(space),
        "train": config.to_dict(),
        "sim": _sim_settings_from_args(args),
        "dataset": {"n": args.questions, "holdout": args.holdout, "generator": "bucketed"},
        "input_width": args.width,
        "snapshot_every": snapshot_every,
        "shuffle_seed": args.shuffle,
    }
    return _run_simulation(settings, args.out)


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args) -> int:
    run_dir = args.run
    manifest = _load_manifest(os.path.join(run_dir, "manifest.json"))
    transitions = analysis.read_transitions_csv(os.path.join(run_dir, "transitions.csv"))
    if not manifest.get("sim"):
        raise ValidationError("run has no simulated mean table; regret analysis unsupported")
    space = _space_from_doc(manifest["space"])
    spec = _sim_spec_from_settings(space, manifest["sim"])
    out_dir = args.out or run_dir
    os.makedirs(out_dir, exist_ok=True)
    trace = analysis.compute_regret(transitions, spec)
    analysis.write_regret_csv(os.path.join(out_dir, "regret.csv"), transitions, trace)
    sublinearity = None
    if trace.steps >= 1000:
        sub = analysis.sublinearity_check(trace)
        sublinearity = {
            "ratios": sub.ratios,
            "mean_ratio": sub.mean_ratio,
            "threshold": sub.threshold,
            "is_sublinear": sub.is_sublinear,
            "fitted_c": sub.fitted_c,
            "prefix_steps": sub.prefix_steps,
        }
    stats = analysis.action_stats(transitions, space)
    summary = {
        "steps": trace.steps,
        "cumulative_regret": trace.total,
        "sublinearity": sublinearity,
        "action_stats": {
            "steps_mean": stats.steps_mean,
            "steps_std": stats.steps_std,
            "temperature_mean": stats.temperature_mean,
            "temperature_std": stats.temperature_std,
            "top_instructions": stats.top_instructions,
            "n_decisions": stats.n_decisions,
        },
        "source_run": os.path.abspath(run_dir),
    }
    analysis.write_summary_json(os.path.join(out_dir, "summary.json"), summary)
    print(f"analyzed {trace.steps} steps; cumulative regret {trace.total:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    top = _Parser(prog="confbandit", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="command", required=True, metavar="{train,infer,simulate,analyze}")

    def add_common_train_flags(p):
        p.add_argument("--config", help="JSON train-config file")
        p.add_argument("--lr", type=float, help="learning rate (default 0.01)")
        p.add_argument("--trials", type=int, help="trials per question (default 4)")
        p.add_argument("--tau0", type=float, help="initial sampling temperature (default 1.0)")
        p.add_argument("--tau-min", type=float, dest="tau_min", help="temperature floor (default 0.1)")
        p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
        p.add_argument("--shuffle", type=int, default=None, metavar="SEED",
                       help="shuffle dataset order with this seed (default: keep file order)")
        p.add_argument("--space", help="action-space override file (JSON)")
        p.add_argument("--width", type=int, default=DEFAULT_WIDTH,
                       help=f"context embedding width (default {DEFAULT_WIDTH})")

    def add_sim_flags(p):
        p.add_argument("--buckets", type=int, default=4, help="simulated context buckets (default 4)")
        p.add_argument("--sigma", type=float, default=0.05, dest="sigma",
                       help="simulated reward noise sigma (default 0.05)")
        p.add_argument("--sim-kind", choices=("dominant", "additive", "random"),
                       default="dominant", help="mean-table shape (default dominant)")
        p.add_argument("--dominant-reward", type=float, default=1.0)
        p.add_argument("--other-reward", type=float, default=0.3)

    p_train = sub.add_parser("train", help="train a policy on a JSONL dataset")
    p_train.add_argument("--dataset", required=True, help="JSONL with id/question/reference")
    p_train.add_argument("--env", choices=("sim", "live"), default="sim")
    p_train.add_argument("--scoring", choices=("binary_judge", "scalar"), default="binary_judge",
                         help="live reward path (default binary_judge)")
    p_train.add_argument("--checkpoint", help="checkpoint output path (default OUT/checkpoint.json)")
    p_train.add_argument("--out", default="run_out", help="output directory (default run_out)")
    add_common_train_flags(p_train)
    add_sim_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_infer = sub.add_parser("infer", help="greedy decisions from a checkpoint")
    p_infer.add_argument("--checkpoint", required=True)
    group = p_infer.add_mutually_exclusive_group(required=True)
    group.add_argument("--question", help="single question text")
    group.add_argument("--dataset", help="JSONL dataset to decide for")
    p_infer.add_argument("--json", action="store_true", help="machine-readable output")
    p_infer.add_argument("--live", action="store_true", help="also call the LLM endpoint")
    p_infer.set_defaults(func=cmd_infer)

    p_sim = sub.add_parser("simulate", help="simulated run with full diagnostics")
    p_sim.add_argument("--out", default="sim_out", help="output directory (default sim_out)")
    p_sim.add_argument("--questions", type=int, default=100, help="generated questions (default 100)")
    p_sim.add_argument("--holdout", type=int, default=50, help="held-out questions (default 50)")
    p_sim.add_argument("--snapshot-every", type=int, dest="snapshot_every", default=None,
                       help="parameter snapshot cadence (default: K/20)")
    p_sim.add_argument("--manifest", help="replay a stored manifest instead of flags")
    add_common_train_flags(p_sim)
    add_sim_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="recompute diagnostics from a run directory")
    p_an.add_argument("--run", required=True, help="directory with manifest.json + transitions.csv")
    p_an.add_argument("--out", default=None, help="output directory (default: the run directory)")
    p_an.set_defaults(func=cmd_analyze)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfBanditError as exc:
        print(f"confbandit: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"confbandit: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
