"""Command-line interface.

Results go to stdout as CSV (or JSON lines for datasets); files are only
written through explicit --out flags. Exit codes: 0 on success, 1 on
domain errors (invalid automaton, diverged training, unsatisfiable
pattern), 2 on usage, IO, and parse errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import learn as learn_mod
from .automaton import (
    forward,
    acceptance,
    load_sfa,
    validate_and_compile,
)
from .errors import InputError, SymfaError
from .learn import LabeledSequence, TrainConfig

# Keys a config file may set; a flag given on the command line wins over
# the file, the file wins over built-in defaults. Keys a subcommand does
# not use are ignored by it.
CONFIG_KEYS = {
    "learning_rate": float,
    "optimizer": str,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "seed": int,
    "length": int,
    "n_pos": int,
    "n_neg": int,
    "sigma": float,
    "lengths": str,
    "repetitions": int,
}


def _read_config(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            if key not in CONFIG_KEYS:
                raise InputError(f"{path}:{lineno}: unknown config key '{key}'")
            try:
                values[key] = CONFIG_KEYS[key](value)
            except ValueError:
                raise InputError(
                    f"{path}:{lineno}: bad value {value!r} for '{key}'"
                ) from None
    return values


def _resolve(args, key: str, default):
    """flag > config file > default."""
    given = getattr(args, key, None)
    if given is not None:
        return given
    config = getattr(args, "_config_values", {})
    if key in config:
        return config[key]
    return default


def _out_stream(args):
    if getattr(args, "out", None):
        return open(args.out, "w", encoding="utf-8")
    return sys.stdout


def _resolve_pattern(text: str, seed: int) -> bench_mod.PatternSpec:
    if text == "driving":
        return bench_mod.driving_pattern()
    if text == "events":
        return bench_mod.events_pattern()
    if text.startswith("random:"):
        parts = text.split(":")
        shape = parts[1].split("x")
        if len(shape) != 2:
            raise InputError(f"bad random pattern '{text}', want random:<states>x<symbols>[:<seed>]")
        pat_seed = int(parts[2]) if len(parts) > 2 else seed
        return bench_mod.random_pattern(int(shape[0]), int(shape[1]), pat_seed)
    if os.path.exists(text):
        sfa = load_sfa(text)
        return bench_mod.PatternSpec(os.path.splitext(os.path.basename(text))[0], sfa)
    raise InputError(
        f"unknown pattern '{text}': expected driving, events, random:QxV[:seed], or a file path"
    )


# --- subcommands -------------------------------------------------------------

def cmd_validate(args) -> int:
    sfa = load_sfa(args.sfa)
    compiled = validate_and_compile(sfa, complete=not args.no_complete)
    completed = ", ".join(compiled.completed_states) or "none"
    print(
        f"valid: {len(compiled.states)} states, {len(compiled.guards)} transitions, "
        f"deterministic and complete (synthesized self-loops: {completed})"
    )
    return 0


def cmd_compile(args) -> int:
    sfa = load_sfa(args.sfa)
    compiled = validate_and_compile(sfa)
    out = _out_stream(args)
    try:
        for (src, dst) in sorted(compiled.guards):
            guard = compiled.guards[(src, dst)]
            out.write(f"# {compiled.states[src]} -> {compiled.states[dst]}\n")
            out.write(guard.dump() + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _sequence_probs(record, extractor, n_vars: int, index: int) -> np.ndarray:
    if "probs" in record:
        ps = np.asarray(record["probs"], dtype=np.float64)
    elif "features" in record:
        if extractor is None:
            raise InputError(
                f"sequence {index} has features, not probs; pass --model to extract symbols"
            )
        ps = extractor.extract(np.asarray(record["features"], dtype=np.float64))
    else:
        raise InputError(f"sequence {index} has neither 'probs' nor 'features'")
    if ps.ndim != 2 or ps.shape[1] != n_vars:
        raise InputError(
            f"sequence {index}: expected (steps, {n_vars}) probabilities, got {ps.shape}"
        )
    return ps


def cmd_infer(args) -> int:
    compiled = validate_and_compile(load_sfa(args.sfa))
    extractor = learn_mod.load_extractor(args.model) if args.model else None
    with open(args.dataset, "r", encoding="utf-8") as fh:
        records = bench_mod.read_sequences_jsonl(fh)
    out = _out_stream(args)
    try:
        if args.mode == "accept":
            out.write("index,acceptance\n")
            for k, record in enumerate(records):
                ps = _sequence_probs(record, extractor, len(compiled.vocab), k)
                out.write(f"{k},{acceptance(compiled, ps):.6f}\n")
        else:
            out.write("index,step," + ",".join(compiled.states) + "\n")
            for k, record in enumerate(records):
                ps = _sequence_probs(record, extractor, len(compiled.vocab), k)
                for t, alpha in enumerate(forward(compiled, ps)):
                    row = ",".join(f"{v:.6f}" for v in alpha)
                    out.write(f"{k},{t},{row}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _load_labeled(path) -> list[LabeledSequence]:
    with open(path, "r", encoding="utf-8") as fh:
        records = bench_mod.read_sequences_jsonl(fh)
    data = []
    for k, record in enumerate(records):
        if "features" not in record:
            raise InputError(f"sequence {k}: training data needs 'features'")
        feats = np.asarray(record["features"], dtype=np.float64)
        if "step_labels" in record:
            data.append(LabeledSequence(feats, step_labels=record["step_labels"]))
        elif "label" in record and isinstance(record["label"], list):
            data.append(LabeledSequence(feats, step_labels=record["label"]))
        elif "label" in record:
            data.append(LabeledSequence(feats, label=int(record["label"])))
        else:
            raise InputError(f"sequence {k}: training data needs 'label' or 'step_labels'")
    return data


def cmd_train(args) -> int:
    compiled = validate_and_compile(load_sfa(args.sfa))
    data = _load_labeled(args.dataset)
    cfg = TrainConfig(
        learning_rate=_resolve(args, "learning_rate", 0.01),
        optimizer=_resolve(args, "optimizer", "adam"),
        batch_size=_resolve(args, "batch_size", 16),
        max_epochs=_resolve(args, "max_epochs", 100),
        patience=_resolve(args, "patience", 10),
        seed=_resolve(args, "seed", 0),
    )
    result = learn_mod.train(compiled, data, cfg)
    learn_mod.save_extractor(result.extractor, args.out)
    print("epoch,loss,accuracy")
    for rec in result.history:
        print(f"{rec.epoch},{rec.loss:.8f},{rec.metric:.4f}")
    return 0


def cmd_generate(args) -> int:
    seed = _resolve(args, "seed", 0)
    pattern = _resolve_pattern(args.pattern, seed)
    dataset = bench_mod.generate_dataset(
        pattern,
        length=_resolve(args, "length", 10),
        n_pos=_resolve(args, "n_pos", 100),
        n_neg=_resolve(args, "n_neg", 100),
        noise=_resolve(args, "sigma", bench_mod.DEFAULT_NOISE),
        seed=seed,
    )
    out = _out_stream(args)
    try:
        bench_mod.write_dataset_jsonl(dataset, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_bench(args) -> int:
    seed = _resolve(args, "seed", 0)
    patterns = [
        _resolve_pattern(text.strip(), seed) for text in args.patterns.split(",")
    ]
    lengths = [int(x) for x in str(_resolve(args, "lengths", "10,30")).split(",")]
    engines = [e.strip() for e in args.engines.split(",")]
    report = bench_mod.run_benchmark(
        patterns,
        lengths,
        engines,
        batch_size=_resolve(args, "batch_size", 16),
        repetitions=_resolve(args, "repetitions", 5),
        seed=seed,
    )
    out = _out_stream(args)
    try:
        out.write(report.to_csv())
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# --- wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symfa",
        description="Symbolic automata over uncertain symbol sequences: "
        "validate, compile, infer, train, generate, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file overlay")

    p = sub.add_parser("validate", help="check determinism and completeness")
    p.add_argument("sfa", help="automaton description file")
    p.add_argument(
        "--no-complete",
        action="store_true",
        help="fail on uncovered interpretations instead of synthesizing self-loops",
    )
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="dump compiled guard circuits")
    p.add_argument("sfa")
    p.add_argument("--out", help="write the dump to a file instead of stdout")
    common(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("infer", help="acceptance or per-step state distributions")
    p.add_argument("sfa")
    p.add_argument("dataset", help="JSON-lines file with 'probs' or 'features' rows")
    p.add_argument("--mode", choices=("accept", "tag"), default="accept")
    p.add_argument("--model", help="extractor checkpoint for feature inputs")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("train", help="train a symbol extractor on labeled sequences")
    p.add_argument("sfa")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample a labeled synthetic dataset")
    p.add_argument(
        "--pattern",
        default="driving",
        help="driving | events | random:<states>x<symbols>[:<seed>] | path to .sfa",
    )
    p.add_argument("--length", type=int)
    p.add_argument("--n-pos", dest="n_pos", type=int)
    p.add_argument("--n-neg", dest="n_neg", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="time compiled vs enumerative acceptance")
    p.add_argument("--patterns", default="driving")
    p.add_argument("--lengths")
    p.add_argument("--engines", default="compiled,enumerative")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._config_values = _read_config(args.config) if args.config else {}
        return args.func(args)
    except (InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SymfaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
