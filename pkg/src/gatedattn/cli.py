"""Command-line entry point: ``gatedattn <verb> ...``.

Every verb writes JSON (or CSV for sweeps). The exit code is 0 only when the
verb's verification gate passes; failing gates exit with 1, bad input with 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, compiler, runner, tasks
from .models import load_checkpoint, save_checkpoint
from .numerics import Rng

log = logging.getLogger("gatedattn")

EXIT_OK, EXIT_GATE, EXIT_INPUT = 0, 1, 2


def _write_json(obj, path):
    text = json.dumps(obj, indent=1, default=float)
    if path:
        Path(path).write_text(text)
    else:
        print(text)


def _read_json(path):
    return json.loads(Path(path).read_text())


def _raw_width(model) -> int:
    """Token width before the constant augmentation."""
    if hasattr(model, "d") and not hasattr(model, "d_in"):
        return model.d
    return model.d_in - (1 if getattr(model, "augmented", False) else 0)


def _parse_verify(spec: str | None, args) -> tuple[int, int, int]:
    """``T=32,nseq=8,seed=0`` overrides of the verification batch."""
    vals = {"T": args.seq_len, "nseq": args.n_seq, "seed": args.seed}
    for item in filter(None, (spec or "").split(",")):
        key, _, value = item.partition("=")
        if key.strip() not in vals:
            raise ValueError(f"unknown --verify key {key!r}; use T, nseq, seed")
        vals[key.strip()] = int(value)
    return vals["T"], vals["nseq"], vals["seed"]


def _compile(source, target: str):
    if target == "lstm" and source.arch == "gated_rnn":
        return compiler.compile_lstm_gated_rnn(source)
    if source.arch != "lsa":
        raise ValueError(f"cannot compile a {source.arch} checkpoint into {target!r}")
    return compiler.COMPILERS[target](source)


def cmd_compile(args) -> int:
    source = load_checkpoint(args.source)
    target = _compile(source, args.to)
    save_checkpoint(target, args.out, {"compiled_from": str(args.source), "compiler": args.to})
    seq_len, n_seq, seed = _parse_verify(args.verify, args)
    rep = compiler.verify_equivalence(source, target, _raw_width(source), seq_len, n_seq, seed)
    doc = {"out": str(args.out), "gate": rep.max_abs_deviation <= args.tol, "tol": args.tol,
           **rep.to_dict()}
    _write_json(doc, args.report)
    return EXIT_OK if doc["gate"] else EXIT_GATE


def cmd_verify(args) -> int:
    a, b = load_checkpoint(args.a), load_checkpoint(args.b)
    d = args.d or _raw_width(a)
    seq_len, n_seq, seed = _parse_verify(args.verify, args)
    rep = compiler.verify_equivalence(a, b, d, seq_len, n_seq, seed)
    doc = {"gate": rep.max_abs_deviation <= args.tol, "tol": args.tol, **rep.to_dict()}
    _write_json(doc, args.report)
    return EXIT_OK if doc["gate"] else EXIT_GATE


def cmd_train(args) -> int:
    config = _read_json(args.config) if args.config else {}
    rec = runner.run_experiment(config, root=args.root, preset=args.preset, seed=args.seed,
                                reuse=args.reuse)
    print(json.dumps({"run_dir": rec.run_dir, "final_train_loss": rec.final_train_loss,
                      "final_val_loss": rec.final_val_loss, "runtime_s": rec.runtime_s}))
    return EXIT_OK


def cmd_analyze(args) -> int:
    model = load_checkpoint(args.checkpoint)
    doc: dict = {"checkpoint": str(args.checkpoint)}
    gate = True
    if args.teacher:
        teacher = load_checkpoint(args.teacher)
        doc["fingerprint_distance"] = analysis.fingerprint_distance(teacher, model)
        spec = tasks.TeacherStudentSpec(d=teacher.d, seq_len=args.seq_len)
        batch = tasks.gen_teacher_student(spec, Rng(args.seed, ("analyze",)), args.n_seq, teacher)
        if hasattr(model, "w_m_out"):
            pruned, prep = analysis.prune(model, args.prune_tol, batch, lambda_tol=args.lambda_tol)
            probe = analysis.probe_kv_q(pruned, teacher, batch, tol=args.lambda_tol)
            doc["prune"] = prep.to_dict()
            doc["probe"] = {"score_kv": probe.score_kv, "score_q": probe.score_q,
                            "n_integrators": probe.n_integrators,
                            "n_memoryless": probe.n_memoryless}
            save_pruned = args.pruned_out
            if save_pruned:
                save_checkpoint(pruned, save_pruned, {"pruned_from": str(args.checkpoint)})
        if args.tol is not None:
            gate = doc["fingerprint_distance"] <= args.tol
    if args.icl:
        doc["icl_terms"] = analysis.icl_polynomial_terms(model, args.d_x, args.d_y)
    if args.recall:
        doc["bilinear"] = analysis.recall_bilinear_probe(model, args.recall_T)
        doc["bilinear"].pop("maps")
    doc["gate"] = gate
    _write_json(doc, args.out)
    return EXIT_OK if gate else EXIT_GATE


def cmd_sweep(args) -> int:
    spec = _read_json(args.config)
    base = spec.get("base", {})
    if args.seed is not None:
        base = {**base, "seed": args.seed}
    sweep = runner.SweepSpec(axis=spec["axis"], values=spec["values"],
                             repeats=spec.get("repeats", 1), base=base,
                             mode=spec.get("mode", "train"), seeds=spec.get("seeds"))
    rows = runner.run_sweep(sweep, root=args.root, out_csv=args.out, workers=args.workers)
    if not args.out:
        runner.write_sweep_csv(rows, sys.stdout)
    return EXIT_OK


def cmd_report(args) -> int:
    records = []
    for path in args.records:
        p = Path(path)
        if p.is_dir():
            records += [_read_json(f) for f in sorted(p.rglob("record.json"))]
        else:
            records.append(_read_json(p))
    doc = runner.report(records)
    if args.markdown:
        Path(args.markdown).write_text(doc["markdown"])
    _write_json(doc, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gatedattn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def verify_opts(p):
        p.add_argument("--seq-len", type=int, default=32)
        p.add_argument("--n-seq", type=int, default=8)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--verify", metavar="SPEC",
                       help="verification batch as T=32,nseq=8,seed=0 (overrides the flags)")
        p.add_argument("--report", help="write the verification report here (default stdout)")

    p = sub.add_parser("compile", help="compile an attention checkpoint into a recurrent one")
    p.add_argument("--from", dest="source", required=True,
                   help="attention checkpoint (or gated RNN checkpoint with --to lstm)")
    p.add_argument("--to", choices=sorted(compiler.COMPILERS), default="compact")
    p.add_argument("--out", required=True)
    verify_opts(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("verify", help="compare two checkpoints on random sequences")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--d", type=int, help="token width (inferred from the first checkpoint)")
    verify_opts(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("config", nargs="?", help="training config JSON")
    p.add_argument("--preset", choices=sorted(runner.PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--root", help=f"run-directory root (default ${runner.RUNS_ENV} or ./runs)")
    p.add_argument("--reuse", action="store_true", help="load a finished run with the same config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="probe, prune and fingerprint a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--teacher", help="attention teacher checkpoint")
    p.add_argument("--icl", action="store_true", help="extract in-context regression terms")
    p.add_argument("--d-x", type=int, default=3)
    p.add_argument("--d-y", type=int, default=3)
    p.add_argument("--recall", action="store_true", help="associative-recall bilinear probe")
    p.add_argument("--recall-T", type=int)
    p.add_argument("--seq-len", type=int, default=32)
    p.add_argument("--n-seq", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prune-tol", type=float, default=analysis.PRUNE_TOL)
    p.add_argument("--lambda-tol", type=float, default=1e-2)
    p.add_argument("--tol", type=float, help="gate on fingerprint distance")
    p.add_argument("--pruned-out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="run a sweep and write the CSV table")
    p.add_argument("config", help="sweep JSON {axis, values, repeats, base, mode}")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--root")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize run records")
    p.add_argument("records", nargs="+",
                   help="record.json files, run directories or verification reports")
    p.add_argument("--out")
    p.add_argument("--markdown")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, TypeError, KeyError, OSError, FloatingPointError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
