"""Experiment orchestration: configs, run directories, sweeps and summary
reports."""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, compiler, numerics, tasks
from .models import SequenceBatch, forward, gated_rnn_forward, load_checkpoint, save_checkpoint
from .models import init as model_init
from .numerics import Rng
from .training import Schedule, batch_loss, model_inputs, train

RUNS_ENV = "GATEDATTN_RUNS"
SWEEP_HEADER = ["axis", "seed", "final_train_loss", "final_val_loss", "delta_loss", "runtime_s"]
EVAL_BATCH = 1024

DEFAULT_CONFIG = {
    "task": "teacher_student",
    "arch": "gated_rnn",
    "dims": {"d": 3, "hidden": 32, "gated": None, "n_layers": 1, "variant": "glu_out"},
    "iterations": 1000,
    "batch": 64,
    "seq_len": 32,
    "lr0": 1e-3,
    "lr_min": 1e-6,
    "weight_decay": 1e-4,
    "seed": 0,
    "checkpoint_every": 0,
    "eval_every": None,
    "task_options": {},
}

PRESETS = {
    "smoke": {"iterations": 200},
    "paper-mini": {"iterations": 100_000},
    "full": {"iterations": 781_250},
}


def runs_root(root=None) -> Path:
    return Path(root or os.environ.get(RUNS_ENV, "runs"))


def merge_config(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_config(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def normalize_config(config: dict, preset: str | None = None, seed: int | None = None) -> dict:
    cfg = merge_config(DEFAULT_CONFIG, config)
    if preset:
        cfg = merge_config(cfg, PRESETS[preset])
    if seed is not None:
        cfg["seed"] = int(seed)
    if cfg["task"] not in TASKS:
        raise ValueError(f"unknown task {cfg['task']!r}; choose from {sorted(TASKS)}")
    return cfg


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- tasks -------------------------------------------------------------------

@dataclass
class TaskSetup:
    sample: object
    validation: SequenceBatch
    train_eval: SequenceBatch
    loss: str
    d_in: int
    d_out: int
    teacher: object = None
    spec: object = None


def _teacher_student(cfg) -> TaskSetup:
    opts = cfg["task_options"]
    spec = tasks.TeacherStudentSpec(d=cfg["dims"]["d"], seq_len=cfg["seq_len"],
                                    input_std=opts.get("input_std", 1.0),
                                    teacher_weight_std=opts.get("teacher_weight_std"),
                                    teacher_seed=opts.get("teacher_seed", 0))
    teacher = tasks.make_teacher(spec)
    root = Rng(cfg["seed"])

    def sample(rng, batch):
        return tasks.gen_teacher_student(spec, rng, batch, teacher)

    return TaskSetup(sample, sample(root.split("validation"), EVAL_BATCH),
                     sample(root.split("train-eval"), EVAL_BATCH), "mse", spec.d, spec.d,
                     teacher, spec)


def _icl(cfg) -> TaskSetup:
    opts = cfg["task_options"]
    spec = tasks.IclRegressionSpec(d_x=opts.get("d_x", 3), d_y=opts.get("d_y", 3),
                                   T=opts.get("T", 12))
    root = Rng(cfg["seed"])

    def sample(rng, batch):
        return tasks.gen_icl_regression(spec, rng, batch, "train")

    val = tasks.gen_icl_regression(spec, root.split("validation"), EVAL_BATCH, "validation")
    return TaskSetup(sample, val, sample(root.split("train-eval"), EVAL_BATCH), "mse",
                     spec.d, spec.d_y, None, spec)


def _recall(cfg) -> TaskSetup:
    opts = cfg["task_options"]
    spec = tasks.AssocRecallSpec(T=opts.get("T", 8), layout=opts.get("layout", "pairs"))
    root = Rng(cfg["seed"])

    def sample(rng, batch):
        return tasks.gen_assoc_recall(spec, rng, batch)

    return TaskSetup(sample, sample(root.split("validation"), EVAL_BATCH),
                     sample(root.split("train-eval"), EVAL_BATCH), "cross_entropy",
                     spec.width, spec.width, None, spec)


TASKS = {"teacher_student": _teacher_student, "icl": _icl, "assoc_recall": _recall}


def build_model(cfg: dict, d_in: int, d_out: int):
    dims = cfg["dims"]
    arch = cfg["arch"]
    n = int(dims["hidden"])
    m = int(dims.get("gated") or n)
    layers = int(dims.get("n_layers") or 1)
    aug = bool(dims.get("augmented", arch in ("gated_rnn", "dense_gated_rnn")))
    width_in = d_in + 1 if aug else d_in
    rng = Rng(cfg["seed"], ("init",))
    if arch == "gated_rnn":
        return model_init.init_gated_rnn(rng, width_in, n, m, d_out, augmented=aug)
    if arch == "dense_gated_rnn":
        return model_init.init_dense_gated_rnn(rng, width_in, n, m, d_out, augmented=aug)
    if arch == "side_gated_rnn":
        return model_init.init_side_gated_rnn(rng, width_in, n, d_out, augmented=aug)
    if arch == "lstm":
        return model_init.init_lstm(rng, width_in, n, d_out, layers, augmented=aug)
    if arch == "gru":
        return model_init.init_gru(rng, width_in, n, d_out, layers, augmented=aug)
    if arch == "lru":
        return model_init.init_lru(rng, width_in, n, d_out, layers,
                                   variant=dims.get("variant", "glu_out"), augmented=aug)
    raise ValueError(f"cannot train architecture {arch!r}")


# -- records -----------------------------------------------------------------

@dataclass
class RunRecord:
    config: dict
    seed: int
    build: str
    run_dir: str | None = None
    train_trace: list = field(default_factory=list)
    val_trace: list = field(default_factory=list)
    final_train_loss: float = float("nan")
    final_val_loss: float = float("nan")
    delta_loss: float = float("nan")
    checkpoints: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    started: str = ""
    runtime_s: float = 0.0

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _analyze(cfg, setup: TaskSetup, model) -> dict:
    """Task-specific post-training metrics."""
    out = {}
    task = cfg["task"]
    if task == "teacher_student" and cfg["arch"] == "gated_rnn":
        opts = cfg["task_options"]
        tol = opts.get("lambda_tol", 1e-2)
        pruned, prep = analysis.prune(model, opts.get("prune_tol", analysis.PRUNE_TOL),
                                      setup.validation, lambda_tol=tol)
        probe = analysis.probe_kv_q(pruned, setup.teacher, setup.validation, tol=tol)
        out.update(
            fingerprint_distance=analysis.fingerprint_distance(setup.teacher, model),
            prune=prep.to_dict(), score_kv=probe.score_kv, score_q=probe.score_q,
            n_integrators=probe.n_integrators, n_memoryless=probe.n_memoryless)
    elif task == "icl" and cfg["arch"] in ("gated_rnn", "side_gated_rnn", "dense_gated_rnn"):
        spec = setup.spec
        out["gd_loss"] = tasks.gd_baseline_loss(spec, tasks.optimal_eta(spec), 100_000,
                                                Rng(cfg["seed"], ("gd-baseline",)))
        out["optimal_eta"] = tasks.optimal_eta(spec)
        out["icl_terms"] = analysis.icl_polynomial_terms(model, spec.d_x, spec.d_y)
    elif task == "icl":
        spec = setup.spec
        out["gd_loss"] = tasks.gd_baseline_loss(spec, tasks.optimal_eta(spec), 100_000,
                                                Rng(cfg["seed"], ("gd-baseline",)))
    elif task == "assoc_recall":
        logits = np.asarray(forward(model, model_inputs(model, setup.validation)))
        out["accuracy"] = tasks.recall_accuracy(logits, setup.validation.labels)
        if cfg["arch"] == "side_gated_rnn":
            probe = analysis.recall_bilinear_probe(model, setup.spec.T)
            out["bilinear_max_ratio"] = probe["max_ratio"]
            out["bilinear_all_rank1"] = probe["all_rank1"]
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_run(run_dir) -> RunRecord:
    """Record of a finished run with its final model attached as ``.model``."""
    run_dir = Path(run_dir)
    record = RunRecord.load(run_dir / "record.json")
    record.model = load_checkpoint(run_dir / "final.json")
    return record


def run_experiment(config: dict, root=None, preset: str | None = None, seed: int | None = None,
                   write: bool = True, analyze: bool = True, reuse: bool = False) -> RunRecord:
    """Train one model as configured and persist everything under
    ``<root>/<config hash>/``.

    Runs are deterministic, so with ``reuse`` a finished run directory for the
    same config is loaded instead of retrained.
    """
    cfg = normalize_config(config, preset, seed)
    if write and reuse:
        done = runs_root(root) / config_hash(cfg)
        if (done / "record.json").exists() and (done / "final.json").exists():
            return load_run(done)
    setup = TASKS[cfg["task"]](cfg)
    model = build_model(cfg, setup.d_in, setup.d_out)
    record = RunRecord(config=cfg, seed=cfg["seed"], build=f"gatedattn {__version__}",
                       started=time.strftime("%Y-%m-%dT%H:%M:%S"))
    run_dir = None
    if write:
        run_dir = runs_root(root) / config_hash(cfg)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(cfg, indent=1))
        record.run_dir = str(run_dir)
        if setup.teacher is not None:
            save_checkpoint(setup.teacher, run_dir / "teacher.json", {"seed": cfg["seed"]})
    schedule = Schedule(iterations=int(cfg["iterations"]), batch=int(cfg["batch"]),
                        lr0=cfg["lr0"], lr_min=cfg["lr_min"], weight_decay=cfg["weight_decay"],
                        eval_every=cfg["eval_every"], checkpoint_every=int(cfg["checkpoint_every"]))

    def evaluate(m):
        return batch_loss(m, setup.validation, setup.loss)

    start = time.perf_counter()
    result = train(model, setup.sample, schedule, cfg["seed"], setup.loss, evaluate)
    model = result.model
    record.train_trace = [list(t) for t in result.train_trace]
    record.val_trace = [list(t) for t in result.eval_trace]
    record.final_train_loss = batch_loss(model, setup.train_eval, setup.loss)
    record.final_val_loss = batch_loss(model, setup.validation, setup.loss)
    if analyze:
        record.metrics = _jsonable(_analyze(cfg, setup, model))
    if "gd_loss" in record.metrics:
        record.delta_loss = record.final_train_loss - record.metrics["gd_loss"]
    record.runtime_s = time.perf_counter() - start
    if write:
        for step, snap in result.checkpoints:
            path = save_checkpoint(snap, run_dir / f"ckpt_{step:08d}.json",
                                   {"seed": cfg["seed"], "step": step})
            record.checkpoints.append(str(path))
        final = save_checkpoint(model, run_dir / "final.json",
                                {"seed": cfg["seed"], "step": schedule.iterations})
        record.checkpoints.append(str(final))
        with open(run_dir / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "train_loss", "val_loss"])
            val = dict((int(s), v) for s, v in record.val_trace)
            for s, v in record.train_trace:
                w.writerow([int(s), repr(v), repr(val.get(int(s), ""))])
        if record.metrics:
            rpath = run_dir / "analysis.json"
            rpath.write_text(json.dumps(record.metrics, indent=1))
            record.reports.append(str(rpath))
        record.save(run_dir / "record.json")
    record.model = model  # not serialized; convenient for callers
    return record


# -- sweeps ------------------------------------------------------------------

@dataclass
class SweepSpec:
    """``axis`` is a dotted config key (``"dims.hidden"``, ``"arch"``, ...).
    ``mode="construct"`` skips training and instead measures the best loss a
    truncated compact construction reaches with the given hidden count."""

    axis: str
    values: list
    repeats: int = 1
    base: dict = field(default_factory=dict)
    mode: str = "train"
    seeds: list | None = None

    def __post_init__(self):
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    def seed_list(self):
        return list(self.seeds) if self.seeds else list(range(self.repeats))


def _set_key(cfg, dotted, value):
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def constructive_loss(teacher, n_hidden: int, batch: SequenceBatch):
    """Best loss reachable by the compact construction restricted to
    ``n_hidden`` of its hidden units.

    Units are removed greedily; after each removal the readout is refitted by
    least squares on ``batch``, so the value is the best this feature set can
    do. When the budget covers the whole construction the loss is exactly 0.
    Returns ``(loss, construction_count)``.
    """
    full = compiler.compile_compact(teacher)
    if n_hidden >= full.n_hidden:
        return 0.0, full.n_hidden
    _, h = gated_rnn_forward(full, model_inputs(full, batch))
    h = np.asarray(h).reshape(-1, full.n_hidden)
    target = batch.targets.reshape(-1, batch.targets.shape[-1])
    wm, wx = np.asarray(full.w_m_out), np.asarray(full.w_x_out)

    def refit_loss(keep):
        if not keep:
            return 0.5 * float(np.mean(target**2))
        g = (h[:, keep] @ wm[:, keep].T) * (h[:, keep] @ wx[:, keep].T)
        coef, _ = numerics.least_squares(g, target)
        return 0.5 * float(np.mean((g @ coef - target) ** 2))

    keep = list(range(full.n_hidden))
    best = 0.0
    while len(keep) > max(n_hidden, 0):
        best, drop = min((refit_loss([k for k in keep if k != j]), j) for j in keep)
        keep.remove(drop)
    return best, full.n_hidden


def _sweep_cell(args):
    sweep, value, seed, root, write_runs = args
    cfg = normalize_config(sweep.base, seed=seed)
    _set_key(cfg, sweep.axis, value)
    start = time.perf_counter()
    if sweep.mode == "construct":
        setup = TASKS[cfg["task"]](cfg)
        loss, _ = constructive_loss(setup.teacher, int(cfg["dims"]["hidden"]), setup.validation)
        row = dict(axis=value, seed=seed, final_train_loss=loss, final_val_loss=loss,
                   delta_loss=float("nan"))
    else:
        rec = run_experiment(cfg, root=root, write=write_runs)
        row = dict(axis=value, seed=seed, final_train_loss=rec.final_train_loss,
                   final_val_loss=rec.final_val_loss, delta_loss=rec.delta_loss)
    row["runtime_s"] = time.perf_counter() - start
    return row


def run_sweep(sweep: SweepSpec, root=None, out_csv=None, write_runs: bool = True,
              workers: int = 1) -> list[dict]:
    """One row per (axis value, seed). Cells are independent; with
    ``workers > 1`` they run in separate processes and the rows are merged in
    (axis, seed) order."""
    if sweep.mode not in ("train", "construct"):
        raise ValueError(f"unknown sweep mode {sweep.mode!r}")
    cells = [(sweep, v, s, root, write_runs) for v in sweep.values for s in sweep.seed_list()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    order = {v: i for i, v in enumerate(map(json.dumps, sweep.values))}
    rows.sort(key=lambda r: (order[json.dumps(r["axis"])], r["seed"]))
    if out_csv:
        write_sweep_csv(rows, out_csv)
    return rows


def write_sweep_csv(rows, dest):
    """Write sweep rows to a path or an open text stream."""
    if hasattr(dest, "write"):
        w = csv.DictWriter(dest, fieldnames=SWEEP_HEADER)
        w.writeheader()
        w.writerows({k: r[k] for k in SWEEP_HEADER} for r in rows)
        return
    with open(dest, "w", newline="") as fh:
        write_sweep_csv(rows, fh)


# -- reports -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3e}"
    return str(v)


def _is_verification(r) -> bool:
    return isinstance(r, dict) and "max_abs_deviation" in r.get("report", r)


def report(records: list) -> dict:
    """Summary with a teacher-identification block (loss, probe scores,
    fingerprint distance), an in-context regression coefficient block and,
    for compiled-construction verification records, their deviations."""
    if not records:
        raise ValueError("report needs at least one run record")
    checks, ident, coeffs, other = [], [], [], []
    for r in records:
        if _is_verification(r):
            rep = r.get("report", r)
            checks.append({k: rep.get(k) for k in ("source_arch", "target_arch", "hidden_count",
                                                   "max_abs_deviation", "max_rel_deviation")})
            continue
        rec = r if isinstance(r, RunRecord) else RunRecord.from_dict(r)
        m = rec.metrics
        base = {"run": rec.run_dir or config_hash(rec.config), "seed": rec.seed,
                "task": rec.config.get("task"), "arch": rec.config.get("arch"),
                "loss": rec.final_train_loss}
        if "score_kv" in m:
            ident.append({**base, "score_kv": m["score_kv"], "score_q": m["score_q"],
                          "poly_distance": m["fingerprint_distance"]})
        elif "icl_terms" in m:
            coeffs.append({**base, "gd_loss": m["gd_loss"], "eta_star": m["optimal_eta"],
                           **m["icl_terms"]["terms"], "residual": m["icl_terms"]["residual"]})
        else:
            other.append({**base, **{k: v for k, v in m.items() if not isinstance(v, (dict, list))}})
    lines = ["# Run summary", ""]
    for title, block in (("Construction verification", checks),
                         ("Teacher identification", ident),
                         ("In-context regression terms", coeffs), ("Other runs", other)):
        if not block:
            continue
        keys = list(block[0])
        lines += [f"## {title}", "", "| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
        lines += ["| " + " | ".join(_fmt(row.get(k, "")) for k in keys) + " |" for row in block]
        lines.append("")
    return {"verification": checks, "identification": ident, "icl": coeffs, "other": other,
            "markdown": "\n".join(lines)}


def verification_record(model_a, model_b, d, seq_len=32, n_seq=8, seed=0) -> dict:
    rep = compiler.verify_equivalence(model_a, model_b, d, seq_len, n_seq, seed)
    return {"report": rep.to_dict()}
