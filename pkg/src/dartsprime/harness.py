"""Experiment orchestration: config files, ablation arms, trial reports, aggregation.

Config files are plain ``key = value`` lines. Values are parsed as JSON when
possible and kept as bare strings otherwise; lines starting with ``#`` are
comments. See the README for the full key list.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from dartsprime.data import Dataset, DatasetSpec, generate_dataset
from dartsprime.discretization import DiscreteArchitecture, random_architecture
from dartsprime.fimt import SchedulerConfig
from dartsprime.genotype import save_genotype, skip_fraction
from dartsprime.regularizers import AdmmConfig, ProximityConfig
from dartsprime.search import EvalConfig, SearchConfig, extended_run, retrain_discrete, run_search
from dartsprime.search_space import SearchSpaceConfig

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (101, 102, 103, 104)


@dataclass(frozen=True)
class Arm:
    name: str
    label: str
    schedule: str
    regularizer: str
    activation: str = "softmax"


ARMS = {a.name: a for a in (
    Arm("darts", "DARTS", "alternating", "none"),
    Arm("cs10", "+CS10", "constant", "none"),
    Arm("fimt", "+FIMT", "dynamic_fimt", "none"),
    Arm("pr", "+PR", "alternating", "proximity"),
    Arm("prime", "DARTS-PRIME", "dynamic_fimt", "proximity"),
    Arm("crb", "+CRB", "alternating", "none", "crb"),
    Arm("fimt_crb", "+FIMT+CRB", "dynamic_fimt", "none", "crb"),
    Arm("prime_crb", "DARTS-PRIME +CRB", "dynamic_fimt", "proximity", "crb"),
    Arm("admm", "+ADMM", "alternating", "admm"),
    Arm("admm_fimt", "+ADMM+FIMT", "dynamic_fimt", "admm"),
    Arm("admm_fimt_crb", "+ADMM+FIMT+CRB", "dynamic_fimt", "admm", "crb"),
)}


# ---------------------------------------------------------------------------
# config files


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    arms: list = field(default_factory=lambda: ["prime"])
    seeds: list = field(default_factory=lambda: list(DEFAULT_SEEDS))
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    search: dict = field(default_factory=dict)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: Path = Path("runs")
    random_baseline: int = 0
    checkpoint_every: int = 5
    evaluate_checkpoints: bool = False
    workers: int = 1

    @classmethod
    def from_mapping(cls, raw: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        raw = dict(raw)
        cfg = cls()
        if "arm" in raw:
            cfg.arms = [raw.pop("arm")]
        if "arms" in raw:
            arms = raw.pop("arms")
            cfg.arms = list(ARMS) if arms == "all" else list(arms)
        for arm in cfg.arms:
            if arm not in ARMS:
                raise ValueError(f"unknown arm {arm!r}; choose from {sorted(ARMS)}")
        if "seeds" in raw:
            cfg.seeds = [int(s) for s in raw.pop("seeds")]
        if "dataset" in raw:
            cfg.dataset = _build(DatasetSpec, raw.pop("dataset"))
        if "eval" in raw:
            cfg.eval = _build(EvalConfig, raw.pop("eval"))
        if "output_dir" in raw:
            out = Path(raw.pop("output_dir"))
            cfg.output_dir = out if out.is_absolute() or base_dir is None else base_dir / out
        for key in ("random_baseline", "checkpoint_every", "workers"):
            if key in raw:
                setattr(cfg, key, int(raw.pop(key)))
        if "evaluate_checkpoints" in raw:
            cfg.evaluate_checkpoints = bool(raw.pop("evaluate_checkpoints"))
        search = raw.pop("search", {})
        if not isinstance(search, dict):
            raise ValueError("'search' must be a JSON object")
        search_fields = {f.name for f in dataclasses.fields(SearchConfig)}
        for key in list(raw):
            if key in search_fields:
                search[key] = raw.pop(key)
        if raw:
            raise ValueError(f"unknown config keys: {sorted(raw)}")
        cfg.search = search
        cfg.dataset.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_mapping(parse_config_text(path.read_text()), path.parent)


def _build(kind, value):
    if isinstance(value, kind):
        return value
    if not isinstance(value, dict):
        raise ValueError(f"{kind.__name__} expects a JSON object, got {value!r}")
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(value) - names
    if unknown:
        raise ValueError(f"unknown {kind.__name__} fields: {sorted(unknown)}")
    return kind(**value)


def build_search_config(arm: str, overrides: dict, seed: int, dataset: Dataset) -> SearchConfig:
    """Arm preset first, then explicit overrides, then dataset-derived shapes."""
    preset = ARMS[arm]
    cfg = SearchConfig(seed=seed)
    cfg.scheduler = SchedulerConfig(kind=preset.schedule)
    cfg.regularizer = preset.regularizer
    cfg.space = (SearchSpaceConfig.crb_default() if preset.activation == "crb" else SearchSpaceConfig())
    for key, value in copy.deepcopy(overrides).items():
        if key == "space":
            if "activation" in value and value["activation"] == "crb" and "ops" not in value:
                value["ops"] = list(SearchSpaceConfig.crb_default().ops)
            cfg.space = dataclasses.replace(cfg.space, **value)
        elif key == "scheduler":
            value = {"kind": value} if isinstance(value, str) else value
            cfg.scheduler = dataclasses.replace(cfg.scheduler, **value)
        elif key == "proximity":
            cfg.proximity = _build(ProximityConfig, value)
        elif key == "admm":
            cfg.admm = _build(AdmmConfig, value)
        elif key == "alpha_betas":
            cfg.alpha_betas = tuple(value)
        elif key == "seed":
            continue
        else:
            setattr(cfg, key, value)
    cfg.space.input_dim = dataset.input_dim
    cfg.space.num_classes = dataset.classes
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialReport:
    arm: str
    label: str
    seed: int
    status: str = "ok"
    test_error: Optional[float] = None
    test_loss: Optional[float] = None
    num_parameters: Optional[int] = None
    skip_fraction: Optional[float] = None
    alpha_steps: Optional[int] = None
    wall_time: Optional[float] = None
    random_mean_error: Optional[float] = None
    genotype_path: str = ""
    history_path: str = ""
    error: str = ""


REPORT_COLUMNS = tuple(f.name for f in dataclasses.fields(TrialReport))


def random_genotype_errors(space: SearchSpaceConfig, dataset: Dataset, eval_config: EvalConfig,
                           n: int, seed: int) -> list:
    """Retrain ``n`` uniformly sampled valid architectures exactly like a searched one."""
    rng = np.random.default_rng(seed)
    return [retrain_discrete(random_architecture(space.layout, space.cell_types, rng),
                             dataset, space, eval_config).test_error for _ in range(n)]


def run_trial(arm: str, seed: int, exp: ExperimentConfig, dataset: Optional[Dataset] = None) -> TrialReport:
    report = TrialReport(arm, ARMS[arm].label, seed)
    try:
        dataset = dataset or generate_dataset(exp.dataset)
        cfg = build_search_config(arm, exp.search, seed, dataset)
        out = Path(exp.output_dir) / arm / f"seed_{seed}"
        t0 = time.perf_counter()
        result = run_search(cfg, dataset)
        report.wall_time = time.perf_counter() - t0
        report.history_path = str(result.history.write(out))
        report.genotype_path = str(save_genotype(result.arch, out / "genotype.json"))
        ev = dataclasses.replace(exp.eval, seed=seed)
        rt = retrain_discrete(result.arch, dataset, cfg.space, ev)
        report.test_error, report.test_loss, report.num_parameters = rt.test_error, rt.test_loss, rt.num_parameters
        report.skip_fraction = skip_fraction(result.arch)
        report.alpha_steps = result.history.alpha_steps
        if exp.random_baseline:
            errs = random_genotype_errors(cfg.space, dataset, ev, exp.random_baseline, seed)
            report.random_mean_error = float(np.mean(errs))
    except Exception as exc:  # one failed trial must not stop the sweep
        report.status = "failed"
        report.error = f"{type(exc).__name__}: {exc}"
        log.error("trial %s/%s failed\n%s", arm, seed, traceback.format_exc())
    return report


def _trial_job(args):
    arm, seed, exp = args
    return run_trial(arm, seed, exp)


def run_experiment(exp: ExperimentConfig) -> list:
    """Run every (arm, seed) trial, then write ``trials.csv`` and the aggregate tables."""
    jobs = [(arm, seed, exp) for arm in exp.arms for seed in exp.seeds]
    if exp.workers > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            reports = list(pool.map(_trial_job, jobs))
    else:
        dataset = generate_dataset(exp.dataset)
        reports = [run_trial(arm, seed, exp, dataset) for arm, seed, _ in jobs]
    write_reports(reports, exp.output_dir)
    return reports


# ---------------------------------------------------------------------------
# aggregation


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_reports(reports: list, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([_fmt(getattr(r, k)) for k in REPORT_COLUMNS])
    rows = aggregate(reports)
    with open(d / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in AGGREGATE_COLUMNS])
    (d / "aggregate.txt").write_text(format_table(rows))


def read_reports(path) -> list:
    ints = {"seed", "num_parameters", "alpha_steps"}
    floats = {"test_error", "test_loss", "skip_fraction", "wall_time", "random_mean_error"}
    out = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            kw = {}
            for k, v in raw.items():
                if k in ints:
                    kw[k] = int(v) if v else None
                elif k in floats:
                    kw[k] = float(v) if v else None
                else:
                    kw[k] = v
            out.append(TrialReport(**kw))
    return out


AGGREGATE_COLUMNS = ("arm", "label", "trials", "failed", "test_error_mean", "test_error_std",
                     "params_mean", "params_std", "skip_fraction_mean", "wall_time_mean",
                     "random_mean_error")


def _mean_std(values: list):
    if not values:
        return None, None
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0


def aggregate(reports: list) -> list:
    """Per-arm mean and sample standard deviation over successful trials."""
    rows = []
    for arm in dict.fromkeys(r.arm for r in reports):
        group = [r for r in reports if r.arm == arm]
        ok = [r for r in group if r.status == "ok"]
        err_m, err_s = _mean_std([r.test_error for r in ok])
        par_m, par_s = _mean_std([r.num_parameters for r in ok])
        skip_m, _ = _mean_std([r.skip_fraction for r in ok])
        wall_m, _ = _mean_std([r.wall_time for r in ok])
        rnd_m, _ = _mean_std([r.random_mean_error for r in ok if r.random_mean_error is not None])
        rows.append({"arm": arm, "label": group[0].label, "trials": len(group),
                     "failed": len(group) - len(ok), "test_error_mean": err_m, "test_error_std": err_s,
                     "params_mean": par_m, "params_std": par_s, "skip_fraction_mean": skip_m,
                     "wall_time_mean": wall_m, "random_mean_error": rnd_m})
    return rows


def format_table(rows: list) -> str:
    head = f"{'Method':<20} {'Test Error (%)':>18} {'Params':>18} {'Skip':>6} {'Search (s)':>11} {'Random (%)':>11}"
    lines = [head, "-" * len(head)]
    for r in rows:
        if r["test_error_mean"] is None:
            lines.append(f"{r['label']:<20} {'all trials failed':>18}")
            continue
        err = f"{100 * r['test_error_mean']:.2f} ± {100 * r['test_error_std']:.2f}"
        par = f"{r['params_mean']:.0f} ± {r['params_std']:.0f}"
        rnd = "" if r["random_mean_error"] is None else f"{100 * r['random_mean_error']:.2f}"
        lines.append(f"{r['label']:<20} {err:>18} {par:>18} {r['skip_fraction_mean']:>6.2f} "
                     f"{r['wall_time_mean']:>11.1f} {rnd:>11}")
    return "\n".join(lines) + "\n"


def report_directory(directory) -> list:
    """Rebuild aggregate tables from every ``trials.csv`` under ``directory``."""
    d = Path(directory)
    reports = []
    for path in sorted(d.rglob("trials.csv")):
        reports.extend(read_reports(path))
    if not reports:
        raise FileNotFoundError(f"no trials.csv under {d}")
    write_reports(reports, d)
    return reports


# ---------------------------------------------------------------------------
# extended runs


def run_extended(exp: ExperimentConfig, arm: Optional[str] = None, seed: Optional[int] = None) -> list:
    """Checkpointed search; returns rows of (epoch, skip fraction, genotype path, test error)."""
    arm = arm or exp.arms[0]
    seed = exp.seeds[0] if seed is None else seed
    dataset = generate_dataset(exp.dataset)
    cfg = build_search_config(arm, exp.search, seed, dataset)
    checkpoints = extended_run(cfg, dataset, exp.checkpoint_every)
    out = Path(exp.output_dir) / arm / f"extended_seed_{seed}"
    rows = []
    for epoch, arch in checkpoints:
        path = save_genotype(arch, out / f"genotype_epoch_{epoch:03d}.json")
        err = None
        if exp.evaluate_checkpoints:
            err = retrain_discrete(arch, dataset, cfg.space, dataclasses.replace(exp.eval, seed=seed)).test_error
        rows.append({"epoch": epoch, "skip_fraction": skip_fraction(arch), "genotype_path": str(path),
                     "test_error": err})
    with open(out / "collapse.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "skip_fraction", "test_error", "genotype_path"))
        for r in rows:
            w.writerow((r["epoch"], repr(r["skip_fraction"]), _fmt(r["test_error"]), r["genotype_path"]))
    return rows


def evaluate_genotype(arch: DiscreteArchitecture, exp: ExperimentConfig, seed: Optional[int] = None):
    dataset = generate_dataset(exp.dataset)
    arm = exp.arms[0]
    cfg = build_search_config(arm, exp.search, exp.seeds[0] if seed is None else seed, dataset)
    space = dataclasses.replace(cfg.space, ops=arch.layout.ops, num_states=arch.layout.num_states,
                                num_inputs=arch.layout.num_inputs, num_cell_types=len(arch.cells),
                                activation="softmax" if "none" in arch.layout.ops else "crb")
    return retrain_discrete(arch, dataset, space, dataclasses.replace(exp.eval, seed=cfg.seed))
