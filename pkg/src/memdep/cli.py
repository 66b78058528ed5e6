"""Command-line pipeline: gen, trace, dataset, pretrain, finetune, predict, probes, match-calls, eval.

Every subcommand accepts ``--seed``, ``--config`` (a ``key=value`` file),
``--out-dir`` and ``--threads``; explicit flags override the config file,
which overrides built-in defaults.  Each run writes its artifacts plus a
``manifest.txt`` holding the resolved config, the seed and sha256 digests
of its inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys

import numpy as np

from .asm.parser import AsmSyntaxError, parse_asm
from .corpusgen import (
    GenSpec,
    GenSpecError,
    format_call_sites,
    format_regions,
    format_signatures,
    generate,
    generate_signature_program,
    parse_call_sites,
    parse_regions,
    parse_signatures,
)
from .encoding import read_samples, write_samples
from .encoding.vocab import Vocabulary
from .model import ConfigError, MemDepNet, ModelConfig
from .model.config import KEYS as MODEL_KEYS
from .seeding import stream, stream_seed
from .tracer import extract_dependencies, read_dependencies, read_traces, trace_program, write_dependencies, write_traces
from .tracer.logfile import TraceFormatError
from .train import (
    FinetuneConfig,
    MatchPolicy,
    PretrainConfig,
    ProbeConfig,
    evaluate_dependencies,
    finetune_dependency,
    format_sweep,
    function_samples,
    policy_grid,
    predict_pipeline,
    pretrain,
    region_ids,
    resolve_targets,
    signature_samples,
    threshold_sweep,
    train_region_probe,
    train_signature_probe,
)
from .train.probes import evaluate_region_probe, evaluate_signature_probe

log = logging.getLogger("memdep")

EXIT_OK, EXIT_PARSE, EXIT_CONFIG, EXIT_BUDGET, EXIT_MISMATCH = 0, 1, 2, 3, 4
MODEL_FILE = "model.cfg"

# stage defaults; model keys come from ModelConfig
DEFAULTS = {
    "gen": {"kind": "deps", "functions": 20, "min-ops": 8, "max-ops": 24, "branch-density": 0.15,
            "memory-density": 0.5, "min-memory-ops": 2, "loops": 0, "sites-per-target": 1},
    "trace": {"run-cap": 32, "policy": "lookahead", "budget": 4096},
    "dataset": {"test-fraction": 0.2},
    "pretrain": {"epochs": 10, "lr": 1e-4, "batch-size": 16, "lower": 0.2, "upper": 0.8, "alpha": 100.0},
    "finetune": {"epochs": 20, "lr": 1e-4, "batch-size": 16, "negative-ratio": 3},
    "predict": {"threshold": 0.5},
    "probe-region": {"epochs": 30, "lr": 1e-4, "batch-size": 16},
    "probe-signature": {"epochs": 30, "lr": 1e-4, "batch-size": 16, "side": "callee", "test-fraction": 0.2},
    "match-calls": {"required": 3},
    "eval": {},
}
MODEL_STAGES = ("pretrain", "finetune")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --- config and manifest -----------------------------------------------------


def read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise CliError(f"{path}:{lineno}: expected key=value", EXIT_CONFIG)
            out[key.strip()] = value.strip()
    return out


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    allowed = dict(DEFAULTS[command])
    if command in MODEL_STAGES:
        allowed.update(ModelConfig().to_mapping())
    unknown = sorted(set(file_values) - set(allowed))
    if unknown:
        raise CliError(f"unknown config keys for {command}: {', '.join(unknown)}", EXIT_CONFIG)
    resolved = dict(allowed)
    resolved.update(file_values)
    resolved.update({k: v for k, v in flag_values.items() if v is not None})
    for key, default in allowed.items():
        if isinstance(default, str) or key in MODEL_KEYS:
            resolved[key] = str(resolved[key]) if key in MODEL_KEYS else resolved[key]
            continue
        try:
            resolved[key] = type(default)(float(resolved[key])) if isinstance(default, int) else float(resolved[key])
        except (TypeError, ValueError):
            raise CliError(f"bad value for {key}: {resolved[key]!r}", EXIT_CONFIG) from None
    return resolved


def digest(path) -> str:
    h = hashlib.sha256()
    if os.path.isdir(path):
        for name in sorted(os.listdir(path)):
            h.update(name.encode())
            h.update(digest(os.path.join(path, name)).encode())
        return h.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, seed: int, threads: int, config: dict, inputs: dict) -> None:
    lines = [f"command {command}", f"seed {seed}", f"threads {threads}"]
    lines += [f"config {k}={config[k]}" for k in sorted(config)]
    lines += [f"input {role} {digest(path)}" for role, path in sorted(inputs.items()) if path]
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write(out_dir, name, text) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _read(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_PARSE) from None


# --- model checkpoints -------------------------------------------------------


def model_config(config: dict) -> ModelConfig:
    return ModelConfig.from_mapping({k: config[k] for k in MODEL_KEYS if k in config})


def save_model(model: MemDepNet, directory) -> None:
    model.save(directory)
    text = "".join(f"{k}={v}\n" for k, v in model.config.to_mapping().items())
    _write(directory, MODEL_FILE, text)


def load_model(directory) -> MemDepNet:
    cfg = ModelConfig.from_mapping(read_config(os.path.join(directory, MODEL_FILE)))
    model = MemDepNet(cfg)
    model.load(directory)
    return model


# --- pair files --------------------------------------------------------------


def parse_pair_lines(text: str) -> dict:
    """``dep a b KIND`` or ``pred a b score`` lines -> {(a, b): kind or score}."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        words = line.split()
        if not words or words[0].startswith("#"):
            continue
        if len(words) != 4 or words[0] not in ("dep", "pred"):
            raise CliError(f"line {lineno}: expected 'dep a b KIND' or 'pred a b score'", EXIT_PARSE)
        try:
            a, b = sorted((int(words[1], 16), int(words[2], 16)))
            out[(a, b)] = float(words[3]) if words[0] == "pred" else words[3]
        except ValueError:
            raise CliError(f"line {lineno}: malformed pair", EXIT_PARSE) from None
    return out


def format_scores(scores: dict) -> str:
    return "".join(f"pred {a:#x} {b:#x} {p:.6f}\n" for (a, b), p in sorted(scores.items()))


# --- subcommands -------------------------------------------------------------


def cmd_gen(args, cfg):
    if cfg["kind"] == "signatures":
        g = generate_signature_program(args.seed, int(cfg["functions"]), int(cfg["sites-per-target"]))
        _write(args.out_dir, "program.asm", g.text)
        _write(args.out_dir, "signatures.txt", format_signatures(g.signatures))
        _write(args.out_dir, "callsites.txt", format_call_sites(g.call_sites, g.call_graph))
        return {}
    if cfg["kind"] != "deps":
        raise CliError(f"unknown corpus kind {cfg['kind']!r}", EXIT_CONFIG)
    try:
        spec = GenSpec(
            seed=args.seed,
            functions=int(cfg["functions"]),
            min_ops=int(cfg["min-ops"]),
            max_ops=int(cfg["max-ops"]),
            branch_density=cfg["branch-density"],
            memory_density=cfg["memory-density"],
            min_memory_ops=int(cfg["min-memory-ops"]),
            loops=bool(cfg["loops"]),
        )
    except GenSpecError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    g = generate(spec)
    _write(args.out_dir, "program.asm", g.text)
    write_dependencies(g.dependencies, os.path.join(args.out_dir, "oracle.deps"))
    _write(args.out_dir, "regions.txt", format_regions(g.regions))
    return {}


def _program(path):
    try:
        return parse_asm(_read(path))
    except AsmSyntaxError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None


def cmd_trace(args, cfg):
    if cfg["policy"] not in ("lookahead", "literal", "none"):
        raise CliError(f"unknown flip policy {cfg['policy']!r}", EXIT_CONFIG)
    program = _program(args.program)
    traces = trace_program(
        program, stream_seed(args.seed, "trace"), run_cap=int(cfg["run-cap"]), policy=cfg["policy"], budget=int(cfg["budget"])
    )
    flat = [t for fn in program.functions for t in traces[fn.name]]
    write_traces(flat, os.path.join(args.out_dir, "traces.txt"))
    deps = set()
    for fn in program.functions:
        deps |= extract_dependencies(traces[fn.name], {i.address for i in fn.instructions})
    write_dependencies(deps, os.path.join(args.out_dir, "deps.txt"))
    if args.oracle:
        oracle = _dependencies(args.oracle)
        if {d.key() for d in oracle} != {d.key() for d in deps}:
            raise CliError(f"tracer disagrees with {args.oracle}: {len(deps ^ oracle)} records differ", EXIT_MISMATCH)
    truncated = [f"{t.function}#{t.run}" for t in flat if t.truncated]
    if truncated:
        raise CliError(f"step budget exceeded in {', '.join(truncated)}", EXIT_BUDGET)
    return {"program": args.program, "oracle": args.oracle}


def _dependencies(path):
    try:
        return read_dependencies(path)
    except TraceFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_PARSE) from None


def cmd_dataset(args, cfg):
    program = _program(args.program)
    try:
        traces = read_traces(args.traces)
    except TraceFormatError as exc:
        raise CliError(f"{args.traces}: {exc}", EXIT_PARSE) from None
    deps = _dependencies(args.deps) if args.deps else set()
    regions = region_ids(parse_regions(_read(args.regions))) if args.regions else None
    by_fn = {}
    for t in traces:
        by_fn.setdefault(t.function, []).append(t)
    pre, labeled = [], []
    for fn in program.functions:
        for t in by_fn.get(fn.name, []):
            pre.extend(function_samples(fn, records=t.records))
        labeled.append(function_samples(fn, {d.pair for d in deps}, regions=regions))
    order = stream(args.seed, "sampling").permutation(len(labeled))
    n_test = int(round(cfg["test-fraction"] * len(labeled)))
    test_idx = set(order[:n_test].tolist())
    train = [s for k, group in enumerate(labeled) if k not in test_idx for s in group]
    test = [s for k, group in enumerate(labeled) if k in test_idx for s in group]
    write_samples(pre, os.path.join(args.out_dir, "pretrain.jsonl"))
    write_samples(train, os.path.join(args.out_dir, "train.jsonl"))
    write_samples(test, os.path.join(args.out_dir, "test.jsonl"))
    names = sorted(program.functions[k].name for k in test_idx)
    _write(args.out_dir, "test-functions.txt", "".join(n + "\n" for n in names))
    Vocabulary().save(os.path.join(args.out_dir, "vocab.txt"))
    return {"program": args.program, "traces": args.traces, "deps": args.deps, "regions": args.regions}


def _samples(path):
    try:
        return read_samples(path)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_PARSE) from None


def _init_model(args, cfg) -> MemDepNet:
    if args.checkpoint:
        return load_model(args.checkpoint)
    return MemDepNet(model_config(cfg), seed=stream_seed(args.seed, "init"))


def cmd_pretrain(args, cfg):
    samples = _samples(args.dataset)
    model = _init_model(args, cfg)
    config = PretrainConfig(
        epochs=int(cfg["epochs"]), lower=cfg["lower"], upper=cfg["upper"], batch_size=int(cfg["batch-size"]),
        lr=cfg["lr"], alpha=cfg["alpha"],
    )
    result = pretrain(model, samples, config, seed=args.seed)
    save_model(model, os.path.join(args.out_dir, "checkpoint"))
    _write(args.out_dir, "loss.txt", "".join(f"{x:.9g}\n" for x in result.losses))
    _write(args.out_dir, "audit.txt", "".join(a.line() + "\n" for a in result.audit))
    if not all(a.ok for a in result.audit):
        raise CliError("realised mask counts differ from the schedule", EXIT_MISMATCH)
    return {"dataset": args.dataset, "checkpoint": args.checkpoint}


def cmd_finetune(args, cfg):
    samples = _samples(args.dataset)
    model = _init_model(args, cfg)
    config = FinetuneConfig(
        epochs=int(cfg["epochs"]), batch_size=int(cfg["batch-size"]), lr=cfg["lr"], negative_ratio=int(cfg["negative-ratio"])
    )
    result = finetune_dependency(model, samples, config, seed=args.seed)
    save_model(model, os.path.join(args.out_dir, "checkpoint"))
    _write(args.out_dir, "loss.txt", "".join(f"{x:.9g}\n" for x in result.losses))
    return {"dataset": args.dataset, "checkpoint": args.checkpoint}


def _names(path):
    return [line.strip() for line in _read(path).splitlines() if line.strip()] if path else None


def cmd_predict(args, cfg):
    model = load_model(args.checkpoint)
    program = _program(args.program)
    result = predict_pipeline(model, program, cfg["threshold"], functions=_names(args.functions))
    _write(args.out_dir, "scores.txt", format_scores(result.scores))
    _write(args.out_dir, "predicted.txt", format_scores({p: result.scores[p] for p in result.predicted}))
    _write(args.out_dir, "notes.txt", "".join(n + "\n" for n in result.notes))
    return {"checkpoint": args.checkpoint, "program": args.program, "functions": args.functions}


def cmd_eval(args, cfg):
    predicted = parse_pair_lines(_read(args.predicted))
    reference = parse_pair_lines(_read(args.reference))
    if args.functions:
        if not args.program:
            raise CliError("--functions needs --program", EXIT_CONFIG)
        program = _program(args.program)
        spans = [(program.function(n).entry, program.function(n).end) for n in _names(args.functions)]
        inside = lambda pair: any(lo <= pair[0] < hi and lo <= pair[1] < hi for lo, hi in spans)
        reference = {p: k for p, k in reference.items() if inside(p)}
        predicted = {p: k for p, k in predicted.items() if inside(p)}
    kinds = {p: k for p, k in reference.items() if isinstance(k, str)}
    report = evaluate_dependencies(set(predicted), set(reference), kinds or None)
    _write(args.out_dir, "report.txt", report.to_text())
    _write(args.out_dir, "report.jsonl", report.to_records())
    if args.scores:
        scores = parse_pair_lines(_read(args.scores))
        if args.functions:
            scores = {p: s for p, s in scores.items() if inside(p)}
        _write(args.out_dir, "sweep.txt", format_sweep(threshold_sweep(scores, set(reference))))
    sys.stdout.write(report.to_text())
    return {"predicted": args.predicted, "reference": args.reference, "scores": args.scores, "functions": args.functions}


def cmd_probe_region(args, cfg):
    model = load_model(args.checkpoint)
    samples = _samples(args.dataset)
    config = ProbeConfig(epochs=int(cfg["epochs"]), batch_size=int(cfg["batch-size"]), lr=cfg["lr"])
    try:
        result = train_region_probe(model, samples, config, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from None
    scores = dict(result.scores)
    if args.test:
        scores["region-test"] = evaluate_region_probe(model, _samples(args.test))["region"]
    save_model(model, os.path.join(args.out_dir, "checkpoint"))
    _write(args.out_dir, "scores.txt", _format_probe(scores))
    return {"checkpoint": args.checkpoint, "dataset": args.dataset, "test": args.test}


def _format_probe(scores: dict) -> str:
    return "".join(f"{name} accuracy={acc:.6f} macro_f1={f1:.6f}\n" for name, (acc, f1) in scores.items())


def cmd_probe_signature(args, cfg):
    if cfg["side"] not in ("caller", "callee"):
        raise CliError(f"side must be caller or callee, got {cfg['side']!r}", EXIT_CONFIG)
    model = load_model(args.checkpoint)
    program = _program(args.program)
    sigs = _signatures(args.signatures)
    sites, _ = _call_sites(args.callsites)
    callee, caller = signature_samples(program, sigs, sites, max_len=model.config.max_len)
    samples = callee if cfg["side"] == "callee" else caller
    order = stream(args.seed, "sampling").permutation(len(samples))
    n_test = int(round(cfg["test-fraction"] * len(samples)))
    test = [samples[k] for k in order[:n_test]]
    train = [samples[k] for k in order[n_test:]]
    config = ProbeConfig(epochs=int(cfg["epochs"]), batch_size=int(cfg["batch-size"]), lr=cfg["lr"])
    result = train_signature_probe(model, train, cfg["side"], config, seed=args.seed)
    scores = {f"train-{k}": v for k, v in result.scores.items()}
    if test:
        scores.update({f"test-{k}": v for k, v in evaluate_signature_probe(model, test, cfg["side"]).items()})
    save_model(model, os.path.join(args.out_dir, "checkpoint"))
    _write(args.out_dir, "scores.txt", _format_probe(scores))
    return {"checkpoint": args.checkpoint, "program": args.program, "signatures": args.signatures, "callsites": args.callsites}


def _signatures(path):
    try:
        return parse_signatures(_read(path))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None


def _call_sites(path):
    try:
        return parse_call_sites(_read(path))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None


def cmd_match_calls(args, cfg):
    functions = _signatures(args.signatures)
    sites, graph = _call_sites(args.callsites)
    rows, detail = [], []
    for policy in policy_grid(int(cfg["required"])):
        resolved = resolve_targets(sites, functions, policy)
        predicted = {(s, t) for s, ts in resolved.items() for t in ts}
        truth = set(graph.items())
        hit = len(predicted & truth)
        avg = len(predicted) / len(sites) if sites else 0.0
        exact = sum(resolved[s] == [graph[s]] for s in sites if s in graph)
        precision = hit / len(predicted) if predicted else 0.0
        recall = hit / len(truth) if truth else 0.0
        rows.append(f"{policy.name:<18}sites={len(sites)} avg_targets={avg:.4f} exact={exact} "
                    f"precision={precision:.6f} recall={recall:.6f}\n")
        detail += [f"{policy.name} {s:#x} {' '.join(ts) or '-'}\n" for s, ts in sorted(resolved.items())]
    _write(args.out_dir, "matches.txt", "".join(rows))
    _write(args.out_dir, "targets.txt", "".join(detail))
    sys.stdout.write("".join(rows))
    return {"signatures": args.signatures, "callsites": args.callsites}


COMMANDS = {
    "gen": cmd_gen,
    "trace": cmd_trace,
    "dataset": cmd_dataset,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "predict": cmd_predict,
    "probe-region": cmd_probe_region,
    "probe-signature": cmd_probe_signature,
    "match-calls": cmd_match_calls,
    "eval": cmd_eval,
}

# subcommand -> flags overriding config keys
STAGE_FLAGS = {
    "gen": [("--kind", str), ("--functions", int), ("--min-ops", int), ("--max-ops", int),
            ("--branch-density", float), ("--memory-density", float), ("--min-memory-ops", int),
            ("--loops", int), ("--sites-per-target", int)],
    "trace": [("--run-cap", int), ("--policy", str), ("--budget", int)],
    "dataset": [("--test-fraction", float)],
    "pretrain": [("--epochs", int), ("--lr", float), ("--batch-size", int), ("--lower", float),
                 ("--upper", float), ("--alpha", float)],
    "finetune": [("--epochs", int), ("--lr", float), ("--batch-size", int), ("--negative-ratio", int)],
    "predict": [("--threshold", float)],
    "probe-region": [("--epochs", int), ("--lr", float), ("--batch-size", int)],
    "probe-signature": [("--epochs", int), ("--lr", float), ("--batch-size", int), ("--side", str),
                        ("--test-fraction", float)],
    "match-calls": [("--required", int)],
    "eval": [],
}
# subcommand -> (path flag, required)
STAGE_INPUTS = {
    "gen": [],
    "trace": [("--program", True), ("--oracle", False)],
    "dataset": [("--program", True), ("--traces", True), ("--deps", False), ("--regions", False)],
    "pretrain": [("--dataset", True), ("--checkpoint", False)],
    "finetune": [("--dataset", True), ("--checkpoint", False)],
    "predict": [("--checkpoint", True), ("--program", True), ("--functions", False)],
    "probe-region": [("--checkpoint", True), ("--dataset", True), ("--test", False)],
    "probe-signature": [("--checkpoint", True), ("--program", True), ("--signatures", True), ("--callsites", True)],
    "match-calls": [("--signatures", True), ("--callsites", True)],
    "eval": [("--predicted", True), ("--reference", True), ("--scores", False), ("--program", False),
             ("--functions", False)],
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="key=value file")
    common.add_argument("--out-dir", default=".")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="memdep", description="Memory-dependence prediction pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        for flag, required in STAGE_INPUTS[name]:
            p.add_argument(flag, required=required)
        for flag, kind in STAGE_FLAGS[name]:
            p.add_argument(flag, type=kind, default=None, dest="cfg_" + flag[2:].replace("-", "_"))
        if name in MODEL_STAGES:
            for key in MODEL_KEYS:
                p.add_argument("--" + key, default=None, dest="cfg_" + key.replace("-", "_"))
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise CliError("--threads must be positive", EXIT_CONFIG)
        file_values = read_config(args.config) if args.config else {}
        flags = {k[4:].replace("_", "-"): v for k, v in vars(args).items() if k.startswith("cfg_")}
        cfg = resolve_config(args.command, file_values, flags)
        log.info("resolved config: %s", " ".join(f"{k}={cfg[k]}" for k in sorted(cfg)))
        os.makedirs(args.out_dir, exist_ok=True)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            inputs = COMMANDS[args.command](args, cfg)
        write_manifest(args.out_dir, args.command, args.seed, args.threads, cfg, inputs)
    except CliError as exc:
        sys.stderr.write(f"memdep {args.command}: {exc}\n")
        return exc.code
    except ConfigError as exc:
        sys.stderr.write(f"memdep {args.command}: {exc}\n")
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
