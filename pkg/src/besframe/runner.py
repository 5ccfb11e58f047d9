"""Sequential query loop, experiment configuration, persistence and summaries."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acquisition as acq
from .bench import make_benchmark, observe
from .gp import Dataset, condition, fit_mle
from .metrics import implicit_log_loss, lse_log_loss, make_eval_grid, simple_regret
from .optimize import Box, OptimizerConfig, maximize_acquisition
from .sampling import sample_max_values, shift_thresholds, stack_thresholds

__all__ = [
    "ExperimentConfig",
    "IterationRecord",
    "ConfigError",
    "PROBLEM_CRITERIA",
    "RESULTS_ENV",
    "load_config",
    "parse_config",
    "run_experiment",
    "run_repetition",
    "summarize",
    "write_records",
    "read_records",
    "write_summary",
    "config_hash",
    "results_dir",
]

log = logging.getLogger(__name__)

RESULTS_ENV = "BESFRAME_RESULTS"

PROBLEM_CRITERIA = {
    "lse": ("BES", "EM", "STRDL"),
    "bo": ("BES_MP", "UCB", "EI", "MES"),
    # the known-threshold criteria serve as reference baselines here
    "implicit_lse": ("BES2_MP", "BES_MP_IMPLICIT", "BES", "EM", "STRDL"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "lse"
    benchmark: str = "branin"
    negate: bool = False
    noise_variance: float = 0.0001
    criterion: str = "BES"
    threshold: float = 0.0
    alpha: float = 0.2
    beta: float = 2.0
    iterations: int = 30
    n_prior_observations: int = 2
    repetitions: int = 1
    refit_every: int = 1
    refit_noise: bool = False
    master_seed: int = 0
    n_max_samples: int = 5
    n_features: int = 500
    quadrature_nodes: int = acq.DEFAULT_NODES
    eval_grid_size: int = 7000
    mle_restarts: int = 10
    n_random_candidates: int = 2000
    n_ascent_starts: int = 10
    ascent_steps: int = 100

    def __post_init__(self):
        object.__setattr__(self, "criterion", self.criterion.upper())
        object.__setattr__(self, "problem", self.problem.lower())
        if self.problem not in PROBLEM_CRITERIA:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.criterion not in PROBLEM_CRITERIA[self.problem]:
            raise ConfigError(f"criterion {self.criterion} is not valid for {self.problem}")
        if self.iterations < 1 or self.repetitions < 1 or self.refit_every < 1:
            raise ConfigError("iterations, repetitions and refit_every must be >= 1")
        if self.n_prior_observations < 2:
            raise ConfigError("need at least two prior observations to fit the GP")
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be non-negative")
        if self.problem == "implicit_lse" and self.criterion == "BES2_MP" and not self.alpha > 0:
            raise ConfigError("BES2_MP needs alpha > 0")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n"
                       for f in dataclasses.fields(self))


@dataclass(frozen=True)
class IterationRecord:
    repetition: int
    iteration: int
    x: tuple
    y: float
    acquisition_value: float
    metric: float
    elapsed_s: float = field(compare=False)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(name, typ, raw):
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, types[key], raw)
    values.update(overrides)
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.to_text().encode()).hexdigest()[:12]


def results_dir() -> Path:
    return Path(os.environ.get(RESULTS_ENV, "results"))


# -- the loop ----------------------------------------------------------------

def _streams(cfg: ExperimentConfig, repetition: int):
    """Independent generators per purpose, derived from (master_seed, repetition)."""
    ss = np.random.SeedSequence([cfg.master_seed, repetition])
    names = ("init", "noise", "grid", "mle", "thresholds", "optimizer", "metric")
    return {n: np.random.default_rng(s) for n, s in zip(names, ss.spawn(len(names)))}


def run_repetition(cfg: ExperimentConfig, repetition: int, fn=None) -> list[IterationRecord]:
    fn = make_benchmark(cfg.benchmark, negate=cfg.negate) if fn is None else fn
    rngs = _streams(cfg, repetition)
    unit = Box.unit(fn.dim)
    opt_cfg = OptimizerConfig(cfg.n_random_candidates, cfg.n_ascent_starts, cfg.ascent_steps)
    grid = make_eval_grid(fn, rngs["grid"], cfg.eval_grid_size, unit=True)
    true_max = fn.known_max
    implicit_threshold = None if true_max is None else true_max - cfg.alpha
    crit = cfg.criterion
    if cfg.problem == "lse":
        level = cfg.threshold
    elif cfg.problem == "implicit_lse" and crit in ("BES", "EM", "STRDL"):
        level = implicit_threshold
    else:
        level = None

    U = unit.sample(cfg.n_prior_observations, rngs["init"])
    ys = [observe(fn, fn.from_unit(u), cfg.noise_variance, rngs["noise"]) for u in U]
    data = Dataset(U, ys)
    params = None
    records = []
    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        if params is None or (it - 1) % cfg.refit_every == 0:
            params = fit_mle(
                data, restarts=cfg.mle_restarts, rng_seed=rngs["mle"],
                noise_variance=None if cfg.refit_noise else cfg.noise_variance,
                init=params,
            )
        gp = condition(params, data)

        thresholds = None
        if crit in ("BES_MP", "MES", "BES_MP_IMPLICIT", "BES2_MP"):
            fstar = sample_max_values(gp, unit, cfg.n_max_samples, cfg.n_features,
                                      rngs["thresholds"])
            if crit == "BES_MP_IMPLICIT":
                thresholds = shift_thresholds(fstar, cfg.alpha)
            elif crit == "BES2_MP":
                thresholds = stack_thresholds(fstar, cfg.alpha)
            else:
                thresholds = fstar
        spec = acq.AcquisitionSpec(crit, threshold=level, thresholds=thresholds,
                                   beta=cfg.beta, alpha=cfg.alpha,
                                   quadrature_nodes=cfg.quadrature_nodes)
        incumbent = float(np.max(data.observations)) if crit == "EI" else None
        criterion = acq.make_criterion(spec, gp, incumbent=incumbent)
        u, value = maximize_acquisition(criterion, unit, opt_cfg, rng=rngs["optimizer"])
        x = fn.from_unit(u)
        y = observe(fn, x, cfg.noise_variance, rngs["noise"])
        data = data.append(u, y)

        post = condition(params, data)
        if cfg.problem == "lse":
            metric = lse_log_loss(post, grid, cfg.threshold)
        elif cfg.problem == "bo":
            metric = simple_regret(fn, Dataset(fn.from_unit(data.inputs), data.observations))
        elif level is not None:
            metric = lse_log_loss(post, grid, level)
        else:
            fs = sample_max_values(post, unit, cfg.n_max_samples, cfg.n_features, rngs["metric"])
            metric = implicit_log_loss(post, grid, fs, cfg.alpha, true_max)
        records.append(IterationRecord(repetition, it, tuple(float(v) for v in x), float(y),
                                       float(value), float(metric), time.perf_counter() - t0))
        log.debug("rep %d iter %d metric %.5g", repetition, it, metric)
    return records


def run_experiment(cfg: ExperimentConfig) -> list[IterationRecord]:
    """All repetitions, in order.  A failing repetition is logged and skipped."""
    fn = make_benchmark(cfg.benchmark, negate=cfg.negate)
    out = []
    for rep in range(cfg.repetitions):
        try:
            out.extend(run_repetition(cfg, rep, fn))
        except Exception:  # noqa: BLE001 - one bad repetition must not sink the run
            log.exception("repetition %d of %s failed", rep, cfg.criterion)
    return out


# -- summaries and persistence -----------------------------------------------

def summarize(records) -> dict:
    """Per-iteration mean/SD of the metric over repetitions, plus log10 of the mean."""
    by_iter: dict[int, list[float]] = {}
    for r in records:
        by_iter.setdefault(r.iteration, []).append(r.metric)
    its = sorted(by_iter)
    mean = [float(np.mean(by_iter[i])) for i in its]
    sd = [float(np.std(by_iter[i])) for i in its]
    with np.errstate(divide="ignore"):
        log10 = [float(np.log10(m)) if m > 0 else float("-inf") for m in mean]
    return {
        "iteration": its,
        "n_repetitions": [len(by_iter[i]) for i in its],
        "mean": mean,
        "sd": sd,
        "log10_mean": log10,
    }


def write_records(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = len(records[0].x) if records else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["repetition", "iteration", *(f"x{i}" for i in range(dim)),
                    "y", "acquisition_value", "metric", "elapsed_s"])
        for r in records:
            w.writerow([r.repetition, r.iteration, *(repr(v) for v in r.x), repr(r.y),
                        repr(r.acquisition_value), repr(r.metric), f"{r.elapsed_s:.6f}"])
    return path


def read_records(path) -> list[IterationRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        xs = tuple(float(row[k]) for k in row if k.startswith("x") and k[1:].isdigit())
        out.append(IterationRecord(int(row["repetition"]), int(row["iteration"]), xs,
                                   float(row["y"]), float(row["acquisition_value"]),
                                   float(row["metric"]), float(row["elapsed_s"])))
    return out


def write_summary(summary: dict, path, cfg: ExperimentConfig | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(summary)
    if cfg is not None:
        payload["config"] = dataclasses.asdict(cfg)
    path.write_text(json.dumps(payload, indent=2, allow_nan=True))
    return path
