"""``ltn train | report | query`` command-line front end.

Exit codes: 0 success, 2 bad input (parse error, unknown symbol, signature
mismatch), 3 non-finite loss during training.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .grounding import GroundingConfig, env_from_dict, env_to_dict
from .logic import LogicError, normalize
from .optimizer import TrainConfig, TrainingError, train
from .parser import KbDocument, ParseError, parse_formula, parse_kb
from .satisfiability import (
    DEFAULT_LAMBDA,
    GroundedTheory,
    SatReport,
    TheoryEntry,
    completion_report,
    forward,
    theory_from_document,
)

MODEL_FORMAT = "ltn-model"
MODEL_VERSION = 1

log = logging.getLogger("ltn")


class UsageError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def load_documents(paths) -> KbDocument:
    doc = KbDocument()
    for path in paths:
        text = Path(path).read_text(encoding="utf-8")
        try:
            part = parse_kb(text)
        except ParseError as exc:
            raise UsageError(f"{path}: {exc.diagnostic()}") from None
        try:
            doc = doc.merge(part)
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from None
    return doc


# ---------------------------------------------------------------------------
# model files


def model_json(theory: GroundedTheory, env, train_config: TrainConfig | None = None) -> str:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "depth": theory.depth,
        "grounding": env_to_dict(env),
    }
    if train_config is not None:
        payload["train"] = {"steps": train_config.steps, "learning_rate": train_config.learning_rate,
                            "decay": train_config.decay, "epsilon": train_config.epsilon,
                            "lambda": train_config.lam, "seed": train_config.seed,
                            "restarts": train_config.restarts}
    return json.dumps(payload, indent=1) + "\n"


def load_model(path):
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read model {path}: {exc}") from None
    if payload.get("format") != MODEL_FORMAT or payload.get("version") != MODEL_VERSION:
        raise UsageError(f"{path} is not a version-{MODEL_VERSION} {MODEL_FORMAT} file")
    return env_from_dict(payload["grounding"]), payload.get("depth", 0), payload.get("train", {})


# ---------------------------------------------------------------------------
# formatting


def fmt(x: float) -> str:
    return f"{x:.2f}"


def _mark(x: float) -> str:
    return fmt(x) + ("*" if x > 0.5 else " ")


def completion_csv(report: SatReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["atom", "truth"])
    consts = report.constants
    for p, table in report.atoms.items():
        for idx in np.ndindex(table.shape):
            w.writerow([f"{p}({','.join(consts[i] for i in idx)})", fmt(table[idx])])
    return out.getvalue()


def axioms_csv(report: SatReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    group_names = sorted({g for e in report.axioms for g in e.groups}, key=_group_order(report))
    w.writerow(["axiom", "lower", "upper", "degree", "loss", "satisfied"] + [f"degree[{g}]" for g in group_names])
    for e in report.axioms:
        w.writerow([e.label, fmt(e.interval[0]), fmt(e.interval[1]), fmt(e.degree), fmt(e.loss),
                    "yes" if e.satisfied else "no"] + [fmt(e.groups[g]) if g in e.groups else "" for g in group_names])
    return out.getvalue()


def _group_order(report: SatReport):
    order = {c: i for i, c in enumerate(report.constants)}
    return lambda g: order[report.groups[g][0]]


def pretty_report(report: SatReport) -> str:
    """Per constant group: one row per constant with unary columns, then binary blocks."""
    lines = []
    unary = [p for p, t in report.atoms.items() if t.ndim == 1]
    binary = [p for p, t in report.atoms.items() if t.ndim == 2]
    idx = {c: i for i, c in enumerate(report.constants)}
    groups = sorted(report.groups.items(), key=lambda kv: idx[kv[1][0]])
    width = max([len(c) for c in report.constants] + [1])
    for name, members in groups:
        lines.append(f"group {name}")
        header = " " * width + " " + " ".join(f"{p:>5}" for p in unary)
        for p in binary:
            header += f" | {p}: " + " ".join(f"{m:>5}" for m in members)
        lines.append(header.rstrip())
        for c in members:
            row = f"{c:<{width}} " + " ".join(_mark(report.atoms[p][idx[c]]) for p in unary)
            for p in binary:
                row += " | " + " " * (len(p) + 1) + " ".join(_mark(report.atoms[p][idx[c], idx[m]]) for m in members)
            lines.append(row.rstrip())
        lines.append("")
    if report.axioms:
        lines.append("axioms")
        for e in report.axioms:
            groups_txt = "".join(f"  [{g}] {fmt(v)}" for g, v in e.groups.items())
            flag = "" if e.satisfied else "  (violated by some instance)"
            lines.append(f"  {fmt(e.degree)}  {e.label}{groups_txt}{flag}")
        lines.append("")
    facts = [e for e in report.entries if e.ground]
    if facts:
        lines.append(f"facts: {len(facts)}, mean truth {fmt(float(np.mean([e.degree for e in facts])))}, "
                     f"min truth {fmt(min(e.degree for e in facts))}")
    lines.append(f"total loss: {report.total_loss:.6f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def _grounding_config(args, doc: KbDocument) -> GroundingConfig:
    n = args.n
    if doc.dim is not None:
        if n is not None and n != doc.dim:
            raise UsageError(f"--n {n} conflicts with 'dim {doc.dim}' declared in the knowledge base")
        n = doc.dim
    return GroundingConfig(n if n is not None else 30, args.k, args.snorm)


def cmd_train(args) -> int:
    doc = load_documents(args.kb)
    try:
        config = _grounding_config(args, doc)
        theory = theory_from_document(doc, config, seed=args.seed, depth=args.depth)
        train_config = TrainConfig(steps=args.steps, learning_rate=args.lr, decay=args.decay, epsilon=args.eps,
                                   lam=args.lam, seed=args.seed, log_every=args.log_every,
                                   restarts=args.restarts)
    except (LogicError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    try:
        env, trace = train(theory, train_config)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(model_json(theory, env, train_config), encoding="utf-8")
    with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["restart", "step", "loss", "mean_truth"])
        for step, loss, truth in zip(trace.steps, trace.losses, trace.mean_truths):
            w.writerow([trace.restart, step, repr(loss), repr(truth)])
    print(f"best loss {trace.best_loss:.6f} at step {trace.best_step} (restart {trace.restart}); "
          f"wrote {out / 'model.json'} and {out / 'trace.csv'}")
    return 0


def _same_signature(a, b) -> bool:
    return (set(a.constants) == set(b.constants) and dict(a.functions) == dict(b.functions)
            and dict(a.predicates) == dict(b.predicates))


def cmd_report(args) -> int:
    env, depth, _ = load_model(args.model)
    doc = load_documents(args.kb)
    try:
        theory = theory_from_document(doc, env.config, depth=depth if args.depth is None else args.depth)
    except (LogicError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if not _same_signature(theory.signature, env.signature):
        raise UsageError("model signature does not match the knowledge base")
    theory = theory.with_env(env)
    report = completion_report(theory, args.lam)
    text = pretty_report(report)
    sys.stdout.write(text)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "completion.csv").write_text(completion_csv(report), encoding="utf-8")
        (out / "axioms.csv").write_text(axioms_csv(report), encoding="utf-8")
        (out / "report.txt").write_text(text, encoding="utf-8")
    return 0


def cmd_query(args) -> int:
    env, depth, _ = load_model(args.model)
    try:
        formula = parse_formula(args.formula, env.signature, allow_free=True)
    except ParseError as exc:
        raise UsageError(exc.diagnostic()) from None
    clauses, sig = normalize(formula, env.signature)
    if sig != env.signature:
        raise UsageError("query introduces Skolem symbols that have no learned grounding; "
                         "existentials are only supported in knowledge-base axioms")
    for clause in clauses:
        theory = GroundedTheory([TheoryEntry(clause)], env, depth)
        fw = forward(theory, 0.0)
        degree = float(fw.degrees.data[0])
        if clause.is_ground:
            print(f"{fmt(degree)}  {clause}")
            continue
        print(f"{fmt(degree)}  {clause}  (harmonic mean over {len(theory.plan.entries[0].instances)} instances)")
        values = fw.instance_values(0)
        for inst, value in zip(theory.plan.entries[0].instances, values):
            print(f"  {fmt(value)}  {inst}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltn", description="Logic tensor networks: learn groundings of "
                                     "first-order knowledge bases and complete them.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="learn a grounding for one or more KB files")
    t.add_argument("kb", nargs="+", help="knowledge-base files (unioned)")
    t.add_argument("--n", type=int, default=None, help="embedding size (default 30, or the KB's dim)")
    t.add_argument("--k", type=int, default=10, help="tensor slices per predicate")
    t.add_argument("--snorm", default="luk", choices=["luk", "prod", "goedel"])
    t.add_argument("--depth", type=int, default=0, help="instantiation depth")
    t.add_argument("--steps", type=int, default=5000)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--decay", type=float, default=0.9)
    t.add_argument("--eps", type=float, default=1e-8)
    t.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--restarts", type=int, default=1)
    t.add_argument("--log-every", type=int, default=100)
    t.add_argument("-o", "--output", default=".", help="output directory for model.json and trace.csv")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("report", help="completion table and axiom degrees for a trained model")
    r.add_argument("model")
    r.add_argument("kb", nargs="+")
    r.add_argument("--depth", type=int, default=None, help="override the model's instantiation depth")
    r.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    r.add_argument("-o", "--output", default=None, help="directory for completion.csv and axioms.csv")
    r.set_defaults(func=cmd_report)

    q = sub.add_parser("query", help="truth value of a formula under a trained model")
    q.add_argument("model")
    q.add_argument("formula")
    q.set_defaults(func=cmd_query)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
