"""Experiment orchestration: train, probe, rebalance, retrain, re-probe.

The protocol trains a reference network, measures its robustness-bias
score, produces one candidate training set per approach (noise-guided
diversification plus four classic resamplers), retrains a fresh network
per candidate with a proportionally scaled epoch budget, and re-measures
the score. Every repeat draws all of its randomness from sub-streams
keyed by the repeat index, so repeats can run in parallel without
changing the result and equal master seeds give bit-identical reports.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .baselines import (ADASYN, ROS, RUS_EQUALIZE, RUS_FRACTION, SMOTE,
                        ResamplePlan, resample)
from .data import (Dataset, DatasetSchema, MinMaxScaler, builtin_dataset_path,
                   load_csv, split_stratified)
from .diversify import DiversifyConfig, derive_seed, diversify
from .errors import (BiasMetricError, ConfigError, DataError, InfeasibleError,
                     NeighborError, TrainingError)
from .mlp import MlpSpec, TrainSchedule, accuracy, init_mlp, scale_schedule, train
from .numerics import round_half_up, substream
from .probe import BOTH, GRADIENT_SIGN, RANDOM_SWEEP, NoiseSpec, feature_scales, noise_sweep

APPROACH_ORDER = ("original", "rus", "ros", "smote", "adasyn",
                  "diversified", "synth_only", "delete_only")
BASELINE_APPROACHES = ("rus", "ros", "smote", "adasyn")
ABLATION_APPROACHES = ("original", "synth_only", "delete_only")

ACCURACY_GATE = 0.90


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetConfig:
    """Where the rows come from and how to read them.

    Exactly one source is set: a bundled dataset name, a single CSV that
    gets a stratified split, or an explicit train/test CSV pair.
    """

    builtin: str | None = None
    csv_path: str | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    label_column: str | int | None = None
    feature_columns: tuple | None = None
    class_names: dict | None = None       # label text -> class index
    train_fraction: float = 0.8
    normalize: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    hidden: tuple[int, ...]
    schedule: TrainSchedule
    noise: NoiseSpec
    diversify: DiversifyConfig
    plans: dict
    subsample_fraction: float | None = None
    repeats: int = 10
    seed: int = 0
    out_dir: str = "results"
    workers: int = 1
    approaches: tuple[str, ...] = APPROACH_ORDER
    raw: dict | None = None               # parsed JSON, echoed into reports


def _expect_mapping(value, ctx: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{ctx} must be a JSON object")
    return value


def _check_keys(d: dict, allowed, ctx: str) -> None:
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {ctx}: {', '.join(extra)}")


def _as_int(value, ctx: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{ctx} must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{ctx} must be >= {minimum}")
    return value


def _as_float(value, ctx: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{ctx} must be a number")
    return float(value)


def _as_str(value, ctx: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{ctx} must be a string")
    return value


def _as_bool(value, ctx: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{ctx} must be true or false")
    return value


def _resolve_path(raw, base_dir, ctx: str) -> str:
    path = Path(os.path.expandvars(_as_str(raw, ctx)))
    if not path.is_absolute():
        path = Path(base_dir) / path
    return str(path)


def _parse_dataset(doc, base_dir) -> DatasetConfig:
    d = _expect_mapping(doc, "dataset")
    _check_keys(d, {"builtin", "csv", "train_csv", "test_csv", "label_column",
                    "feature_columns", "class_names", "train_fraction",
                    "normalize"}, "dataset")
    sources = [k for k in ("builtin", "csv", "train_csv") if k in d]
    if len(sources) != 1:
        raise ConfigError(
            "dataset needs exactly one of 'builtin', 'csv' or 'train_csv'/'test_csv'")
    if ("train_csv" in d) != ("test_csv" in d):
        raise ConfigError("'train_csv' and 'test_csv' must be given together")

    label = d.get("label_column")
    if label is not None and (isinstance(label, bool) or not isinstance(label, (str, int))):
        raise ConfigError("dataset.label_column must be a column name or index")
    feats = d.get("feature_columns")
    if feats is not None:
        if not isinstance(feats, list) or not feats:
            raise ConfigError("dataset.feature_columns must be a non-empty list")
        feats = tuple(feats)
    mapping = d.get("class_names")
    if mapping is not None:
        mapping = dict(_expect_mapping(mapping, "dataset.class_names"))
        for name, idx in mapping.items():
            _as_int(idx, f"dataset.class_names['{name}']", minimum=0)
    fraction = _as_float(d.get("train_fraction", 0.8), "dataset.train_fraction")
    if not 0.0 < fraction < 1.0:
        raise ConfigError("dataset.train_fraction must be in (0, 1)")

    return DatasetConfig(
        builtin=_as_str(d["builtin"], "dataset.builtin") if "builtin" in d else None,
        csv_path=_resolve_path(d["csv"], base_dir, "dataset.csv") if "csv" in d else None,
        train_csv=_resolve_path(d["train_csv"], base_dir, "dataset.train_csv")
        if "train_csv" in d else None,
        test_csv=_resolve_path(d["test_csv"], base_dir, "dataset.test_csv")
        if "test_csv" in d else None,
        label_column=label,
        feature_columns=feats,
        class_names=mapping,
        train_fraction=fraction,
        normalize=_as_bool(d.get("normalize", False), "dataset.normalize"),
    )


def _parse_schedule(doc) -> TrainSchedule:
    d = _expect_mapping(doc, "schedule")
    _check_keys(d, {"phases", "validation_fraction"}, "schedule")
    phases = d.get("phases")
    if not isinstance(phases, list) or not phases:
        raise ConfigError("schedule.phases must be a non-empty list of [lr, epochs]")
    parsed = []
    for i, phase in enumerate(phases):
        if not isinstance(phase, list) or len(phase) != 2:
            raise ConfigError(f"schedule.phases[{i}] must be a [lr, epochs] pair")
        parsed.append((_as_float(phase[0], f"schedule.phases[{i}] lr"),
                       _as_int(phase[1], f"schedule.phases[{i}] epochs", minimum=1)))
    vf = _as_float(d.get("validation_fraction", 0.0), "schedule.validation_fraction")
    try:
        return TrainSchedule(tuple(parsed), vf)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None


_ATTACKS = {"random": RANDOM_SWEEP, "random_sweep": RANDOM_SWEEP,
            "gradient": GRADIENT_SIGN, "gradient_sign": GRADIENT_SIGN,
            "both": BOTH}


def _parse_noise(doc) -> NoiseSpec:
    if doc is None:
        return NoiseSpec()
    d = _expect_mapping(doc, "noise")
    _check_keys(d, {"levels", "samples_per_input", "attack", "per_sample_scale"},
                "noise")
    kwargs = {}
    levels = d.get("levels")
    if levels is not None:
        if not isinstance(levels, list) or not levels:
            raise ConfigError("noise.levels must be a non-empty list of numbers")
        kwargs["levels"] = tuple(_as_float(v, "noise.levels entry") for v in levels)
    if "samples_per_input" in d:
        kwargs["samples_per_input"] = _as_int(d["samples_per_input"],
                                              "noise.samples_per_input", minimum=1)
    if "attack" in d:
        name = _as_str(d["attack"], "noise.attack")
        if name not in _ATTACKS:
            raise ConfigError(f"noise.attack must be one of {sorted(set(_ATTACKS))}")
        kwargs["attack"] = _ATTACKS[name]
    if "per_sample_scale" in d:
        kwargs["per_sample_scale"] = _as_bool(d["per_sample_scale"],
                                              "noise.per_sample_scale")
    try:
        return NoiseSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None


def _parse_diversify(doc) -> DiversifyConfig:
    d = _expect_mapping(doc, "diversify")
    _check_keys(d, {"top_k", "removal_fraction", "corr_threshold", "clusters",
                    "synth_base", "max_retries", "mode"}, "diversify")
    if "top_k" not in d:
        raise ConfigError("diversify.top_k is required")
    kwargs = {"top_k": _as_int(d["top_k"], "diversify.top_k", minimum=1)}
    if "removal_fraction" in d:
        kwargs["removal_fraction"] = _as_float(d["removal_fraction"],
                                               "diversify.removal_fraction")
    if "corr_threshold" in d:
        kwargs["corr_threshold"] = _as_float(d["corr_threshold"],
                                             "diversify.corr_threshold")
    if "clusters" in d:
        kwargs["clusters"] = _as_int(d["clusters"], "diversify.clusters", minimum=1)
    if d.get("synth_base") is not None:
        kwargs["synth_base"] = _as_int(d["synth_base"], "diversify.synth_base",
                                       minimum=1)
    if "max_retries" in d:
        kwargs["max_retries"] = _as_int(d["max_retries"], "diversify.max_retries",
                                        minimum=1)
    if "mode" in d:
        kwargs["mode"] = _as_str(d["mode"], "diversify.mode").replace("-", "_")
    try:
        return DiversifyConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"diversify: {exc}") from None


def _parse_baselines(doc) -> tuple[dict, float | None]:
    if doc is None:
        doc = {}
    d = _expect_mapping(doc, "baselines")
    _check_keys(d, {"subsample_fraction", "rus", "smote", "adasyn"}, "baselines")

    fraction = None
    if d.get("subsample_fraction") is not None:
        fraction = _as_float(d["subsample_fraction"], "baselines.subsample_fraction")
        if not 0.0 < fraction < 1.0:
            raise ConfigError("baselines.subsample_fraction must be in (0, 1)")

    rus_doc = _expect_mapping(d.get("rus", {}), "baselines.rus")
    _check_keys(rus_doc, {"method", "fraction"}, "baselines.rus")
    method = _as_str(rus_doc.get("method", "equalize"), "baselines.rus.method")
    try:
        if method == "equalize":
            rus_plan = ResamplePlan(RUS_EQUALIZE)
        elif method == "fraction":
            rus_plan = ResamplePlan(
                RUS_FRACTION,
                fraction=_as_float(rus_doc.get("fraction", 0.25),
                                   "baselines.rus.fraction"))
        else:
            raise ConfigError("baselines.rus.method must be 'equalize' or 'fraction'")

        smote_doc = _expect_mapping(d.get("smote", {}), "baselines.smote")
        _check_keys(smote_doc, {"k_neighbors"}, "baselines.smote")
        smote_plan = ResamplePlan(
            SMOTE, k_neighbors=_as_int(smote_doc.get("k_neighbors", 5),
                                       "baselines.smote.k_neighbors", minimum=1))

        adasyn_doc = _expect_mapping(d.get("adasyn", {}), "baselines.adasyn")
        _check_keys(adasyn_doc, {"k_neighbors", "balance"}, "baselines.adasyn")
        adasyn_plan = ResamplePlan(
            ADASYN,
            k_neighbors=_as_int(adasyn_doc.get("k_neighbors", 5),
                                "baselines.adasyn.k_neighbors", minimum=1),
            balance=_as_float(adasyn_doc.get("balance", 1.0),
                              "baselines.adasyn.balance"))
    except ValueError as exc:
        raise ConfigError(f"baselines: {exc}") from None

    plans = {"rus": rus_plan, "ros": ResamplePlan(ROS),
             "smote": smote_plan, "adasyn": adasyn_plan}
    return plans, fraction


def parse_experiment_config(doc: dict, base_dir=".") -> ExperimentConfig:
    d = _expect_mapping(doc, "config")
    _check_keys(d, {"dataset", "network", "schedule", "noise", "diversify",
                    "baselines", "repeats", "seed", "out_dir", "workers",
                    "approaches"}, "config")
    for key in ("dataset", "network", "schedule", "diversify"):
        if key not in d:
            raise ConfigError(f"config is missing required section '{key}'")

    net = _expect_mapping(d["network"], "network")
    _check_keys(net, {"hidden"}, "network")
    hidden = net.get("hidden")
    if not isinstance(hidden, list) or not hidden:
        raise ConfigError("network.hidden must be a non-empty list of layer widths")
    hidden = tuple(_as_int(w, "network.hidden entry", minimum=1) for w in hidden)

    plans, subsample_fraction = _parse_baselines(d.get("baselines"))

    approaches = d.get("approaches")
    if approaches is None:
        approaches = APPROACH_ORDER
    else:
        if not isinstance(approaches, list) or not approaches:
            raise ConfigError("approaches must be a non-empty list")
        unknown = sorted(set(approaches) - set(APPROACH_ORDER))
        if unknown:
            raise ConfigError(f"unknown approach(es): {', '.join(unknown)}")
        if "original" not in approaches:
            raise ConfigError("approaches must include 'original'")
        approaches = tuple(a for a in APPROACH_ORDER if a in approaches)

    return ExperimentConfig(
        dataset=_parse_dataset(d["dataset"], base_dir),
        hidden=hidden,
        schedule=_parse_schedule(d["schedule"]),
        noise=_parse_noise(d.get("noise")),
        diversify=_parse_diversify(d["diversify"]),
        plans=plans,
        subsample_fraction=subsample_fraction,
        repeats=_as_int(d.get("repeats", 10), "repeats", minimum=1),
        seed=_as_int(d.get("seed", 0), "seed", minimum=0),
        out_dir=_as_str(d.get("out_dir", "results"), "out_dir"),
        workers=_as_int(d.get("workers", 1), "workers", minimum=1),
        approaches=approaches,
        raw=d,
    )


def load_experiment_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_experiment_config(doc, base_dir=Path(path).resolve().parent)


# ---------------------------------------------------------------------------
# Dataset plumbing
# ---------------------------------------------------------------------------

def _read_header(path) -> list[str]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot read dataset file {path}: {exc}") from None
    if header is None:
        raise DataError(f"{path}: file is empty")
    return header


def _load_one(path, label, feature_columns, mapping) -> Dataset:
    if feature_columns is None:
        header = _read_header(path)
        if isinstance(label, int):
            feature_columns = [i for i in range(len(header)) if i != label]
        else:
            feature_columns = [name for name in header if name != label]
        if not feature_columns:
            raise DataError(f"{path}: no feature columns besides the label")
    try:
        return load_csv(path, DatasetSchema(label, list(feature_columns), mapping))
    except OSError as exc:
        raise DataError(f"cannot read dataset file {path}: {exc}") from None


def load_dataset_pair(dcfg: DatasetConfig, split_seed: int) -> tuple[Dataset, Dataset]:
    """Materialize the train/test pair a config describes.

    Single-source configs are split with a stratified shuffle; explicit
    pairs share one class-index mapping so labels agree across files.
    """
    label = dcfg.label_column
    if label is None:
        label = "species" if dcfg.builtin == "iris" else "label"
    mapping = dict(dcfg.class_names) if dcfg.class_names else None

    if dcfg.train_csv is not None:
        train = _load_one(dcfg.train_csv, label, dcfg.feature_columns, mapping)
        if mapping is None:
            mapping = {name: i for i, name in enumerate(train.class_names)}
        test = _load_one(dcfg.test_csv, label, dcfg.feature_columns, mapping)
    else:
        path = builtin_dataset_path(dcfg.builtin) if dcfg.builtin else dcfg.csv_path
        full = _load_one(path, label, dcfg.feature_columns, mapping)
        train, test = split_stratified(full, dcfg.train_fraction, split_seed)

    if dcfg.normalize:
        scaler = MinMaxScaler.fit(train.features)
        train, test = scaler.transform(train), scaler.transform(test)
    return train, test


def subsample_imbalanced(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep a random `fraction` of one randomly chosen class's rows.

    The resamplers need an imbalance to correct, so a balanced training
    set is skewed by thinning a single class; the other classes keep
    their full diversity.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if ds.L < 2:
        raise DataError("subsampling one class needs at least two classes")
    rng = substream(seed, "subsample")
    target = int(rng.integers(ds.L))
    rows = np.flatnonzero(ds.labels == target)
    keep = max(1, round_half_up(fraction * len(rows)))
    kept = rows[np.sort(rng.choice(len(rows), size=keep, replace=False))]
    idx = np.sort(np.concatenate([np.flatnonzero(ds.labels != target), kept]))
    return ds.take(idx)


# ---------------------------------------------------------------------------
# Per-repeat protocol
# ---------------------------------------------------------------------------

@dataclass
class LegResult:
    """One (approach, repeat) measurement."""

    approach: str
    repeat: int
    b_r: float | None
    delta_x_max: float | None
    train_accuracy: float | None
    test_accuracy: float | None
    n_train: int
    accuracy_flag: bool = False
    reseeded: bool = False
    infeasible: bool = False
    note: str = ""


def _train_gated(cfg: ExperimentConfig, fit_ds: Dataset, gate_ds: Dataset,
                 test_ds: Dataset, repeat: int, approach: str,
                 schedule: TrainSchedule):
    """Train one leg; a failed accuracy gate re-seeds the leg exactly once.

    The gate judges the net on the original train split, not on whatever
    augmented set it was fitted to: synthetic rows are deliberately noisy
    and need not be memorized, the real data must still be classified.
    """
    fallback = None
    error = None
    for attempt in range(2):
        spec = MlpSpec((fit_ds.d, *cfg.hidden, fit_ds.L),
                       init_seed=derive_seed(cfg.seed, "rep", repeat, approach,
                                             "init", attempt))
        try:
            model, rep = train(init_mlp(spec), fit_ds, schedule,
                               derive_seed(cfg.seed, "rep", repeat, approach,
                                           "fit", attempt),
                               test_ds=test_ds)
        except TrainingError as exc:
            error = exc
            continue
        train_acc = accuracy(model, gate_ds)
        if train_acc > ACCURACY_GATE and rep.test_accuracy > ACCURACY_GATE:
            return model, rep, train_acc, False, attempt > 0
        fallback = (model, rep, train_acc)
    if fallback is None:
        raise error
    model, rep, train_acc = fallback
    return model, rep, train_acc, True, True


def _measured_leg(approach, repeat, probe_rep, train_rep, train_acc, flagged,
                  reseeded, n_train, note=""):
    return LegResult(approach=approach, repeat=repeat, b_r=probe_rep.b_r,
                     delta_x_max=probe_rep.delta_x_max,
                     train_accuracy=train_acc,
                     test_accuracy=train_rep.test_accuracy, n_train=n_train,
                     accuracy_flag=flagged, reseeded=reseeded, note=note)


def _infeasible_leg(approach, repeat, note):
    return LegResult(approach=approach, repeat=repeat, b_r=None, delta_x_max=None,
                     train_accuracy=None, test_accuracy=None, n_train=0,
                     infeasible=True, note=note)


def reference_probe(cfg: ExperimentConfig, train_ds: Dataset, test_ds: Dataset,
                    repeat: int = 0):
    """Train the reference network for one repeat and probe it."""
    scales = feature_scales(train_ds.features)
    model, rep, _, flagged, reseeded = _train_gated(
        cfg, train_ds, train_ds, test_ds, repeat, "original", cfg.schedule)
    probe = noise_sweep(model, test_ds, cfg.noise,
                        derive_seed(cfg.seed, "rep", repeat, "probe"), scales)
    return model, rep, probe, flagged, reseeded


def baseline_source(cfg: ExperimentConfig, train_ds: Dataset) -> Dataset:
    """The sub-dataset the resamplers start from, drawn once per experiment."""
    if cfg.subsample_fraction is None:
        return train_ds
    return subsample_imbalanced(train_ds, cfg.subsample_fraction,
                                derive_seed(cfg.seed, "subsample"))


def run_repeat(cfg: ExperimentConfig, train_ds: Dataset, test_ds: Dataset,
               repeat: int, base: Dataset | None = None) -> list[LegResult]:
    """Measure every configured approach once.

    All legs are probed with the same noise sub-streams and with feature
    scales taken from the original training set, so scores differ only
    through the nets and the data they were trained on. Legs whose method
    cannot run (resampler infeasibility, divergence, or a class with no
    correct variants) are recorded as infeasible rather than dropped.

    `base` is the resamplers' source dataset; it is fixed across repeats
    (per-repeat variability comes from the training, probe and
    diversification sub-streams alone).
    """
    scales = feature_scales(train_ds.features)
    probe_seed = derive_seed(cfg.seed, "rep", repeat, "probe")

    model0, rep0, acc0, flag0, reseed0 = _train_gated(
        cfg, train_ds, train_ds, test_ds, repeat, "original", cfg.schedule)
    probe0 = noise_sweep(model0, test_ds, cfg.noise, probe_seed, scales)
    legs = {"original": _measured_leg("original", repeat, probe0, rep0, acc0,
                                      flag0, reseed0, train_ds.n)}

    if base is None:
        base = baseline_source(cfg, train_ds)

    for approach in cfg.approaches:
        if approach == "original":
            continue
        note = ""
        try:
            if approach in BASELINE_APPROACHES:
                new_ds = resample(base, cfg.plans[approach],
                                  derive_seed(cfg.seed, "rep", repeat, approach))
            else:
                mode = cfg.diversify.mode if approach == "diversified" else approach
                dd = diversify(train_ds, probe0, replace(cfg.diversify, mode=mode),
                               derive_seed(cfg.seed, "rep", repeat, approach))
                new_ds = dd.dataset
                diff = dd.validation.corr_diff
                note = (f"validation corr_diff="
                        f"{format(diff, '.3f') if np.isfinite(diff) else 'inf'}"
                        f" attempts={dd.validation.attempts}"
                        f" passed={dd.validation.passed}")
            schedule = scale_schedule(cfg.schedule, train_ds.n, new_ds.n)
            model, rep, acc, flagged, reseeded = _train_gated(
                cfg, new_ds, train_ds, test_ds, repeat, approach, schedule)
            probe_rep = noise_sweep(model, test_ds, cfg.noise, probe_seed, scales)
        except (InfeasibleError, NeighborError, TrainingError, BiasMetricError) as exc:
            legs[approach] = _infeasible_leg(approach, repeat, str(exc))
            continue
        legs[approach] = _measured_leg(approach, repeat, probe_rep, rep, acc,
                                       flagged, reseeded, new_ds.n, note)
    return [legs[a] for a in cfg.approaches]


def _repeat_worker(args):
    cfg, train_ds, test_ds, repeat, base = args
    started = time.perf_counter()
    legs = run_repeat(cfg, train_ds, test_ds, repeat, base)
    return legs, time.perf_counter() - started


# ---------------------------------------------------------------------------
# Aggregation and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApproachAggregate:
    approach: str
    per_repeat: tuple                 # b_r per repeat, None where infeasible
    mean: float | None
    std: float | None
    min: float | None
    max: float | None
    feasible: int
    flagged: int
    infeasible: int


@dataclass
class ExperimentReport:
    approaches: tuple[str, ...]
    repeats: int
    master_seed: int
    legs: tuple[LegResult, ...]       # repeat-major, approach order within
    aggregates: dict
    canonical_b_r: float | None       # repeat 0's reference score
    config: dict | None
    durations: dict | None = None     # never written into report files


def aggregate_legs(legs, approaches, repeats) -> dict:
    per = {a: [None] * repeats for a in approaches}
    flagged = {a: 0 for a in approaches}
    infeasible = {a: 0 for a in approaches}
    for leg in legs:
        per[leg.approach][leg.repeat] = leg.b_r
        flagged[leg.approach] += leg.accuracy_flag
        infeasible[leg.approach] += leg.infeasible

    out = {}
    for a in approaches:
        values = [v for v in per[a] if v is not None]
        if values:
            mean = float(np.mean(values))
            std = 0.0 if len(values) == 1 else float(np.std(values, ddof=1))
            lo, hi = float(min(values)), float(max(values))
        else:
            mean = std = lo = hi = None
        out[a] = ApproachAggregate(a, tuple(per[a]), mean, std, lo, hi,
                                   len(values), flagged[a], infeasible[a])
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    started = time.perf_counter()
    train_ds, test_ds = load_dataset_pair(cfg.dataset, derive_seed(cfg.seed, "split"))
    base = None
    if any(a in BASELINE_APPROACHES for a in cfg.approaches):
        base = baseline_source(cfg, train_ds)
    tasks = [(cfg, train_ds, test_ds, r, base) for r in range(cfg.repeats)]
    if cfg.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_repeat_worker, tasks))
    else:
        outcomes = [_repeat_worker(task) for task in tasks]

    legs = tuple(leg for result, _ in outcomes for leg in result)
    aggregates = aggregate_legs(legs, cfg.approaches, cfg.repeats)
    durations = {"total_seconds": time.perf_counter() - started,
                 "per_repeat_seconds": [elapsed for _, elapsed in outcomes]}
    return ExperimentReport(
        approaches=cfg.approaches,
        repeats=cfg.repeats,
        master_seed=cfg.seed,
        legs=legs,
        aggregates=aggregates,
        canonical_b_r=legs[0].b_r if legs else None,
        config=cfg.raw,
        durations=durations,
    )


def _leg_to_json(leg: LegResult) -> dict:
    return {"approach": leg.approach, "repeat": leg.repeat, "b_r": leg.b_r,
            "delta_x_max": leg.delta_x_max, "train_accuracy": leg.train_accuracy,
            "test_accuracy": leg.test_accuracy, "n_train": leg.n_train,
            "accuracy_flag": leg.accuracy_flag, "reseeded": leg.reseeded,
            "infeasible": leg.infeasible, "note": leg.note}


def report_to_json(report: ExperimentReport) -> dict:
    aggregates = {}
    for a, agg in report.aggregates.items():
        aggregates[a] = {"mean": agg.mean, "std": agg.std, "min": agg.min,
                         "max": agg.max, "feasible": agg.feasible,
                         "flagged": agg.flagged, "infeasible": agg.infeasible,
                         "per_repeat": list(agg.per_repeat)}
    return {"approaches": list(report.approaches),
            "repeats": report.repeats,
            "master_seed": report.master_seed,
            "canonical_original_b_r": report.canonical_b_r,
            "aggregates": aggregates,
            "legs": [_leg_to_json(leg) for leg in report.legs],
            "config": report.config}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


RUNS_COLUMNS = ("repeat", "approach", "b_r", "delta_x_max", "train_accuracy",
                "test_accuracy", "n_train", "accuracy_flag", "reseeded",
                "infeasible", "note")
REPORT_COLUMNS = ("approach", "feasible", "flagged", "infeasible", "mean_b_r",
                  "std_b_r", "min_b_r", "max_b_r", "canonical_b_r")


def write_runs_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNS_COLUMNS)
        for leg in report.legs:
            writer.writerow([_cell(v) for v in (
                leg.repeat, leg.approach, leg.b_r, leg.delta_x_max,
                leg.train_accuracy, leg.test_accuracy, leg.n_train,
                leg.accuracy_flag, leg.reseeded, leg.infeasible, leg.note)])


def write_report_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for a in report.approaches:
            agg = report.aggregates[a]
            canonical = report.canonical_b_r if a == "original" else None
            writer.writerow([_cell(v) for v in (
                a, agg.feasible, agg.flagged, agg.infeasible, agg.mean,
                agg.std, agg.min, agg.max, canonical)])


def render_boxplot(report: ExperimentReport) -> str:
    """Hand-rolled SVG: one whisker box per approach, fixed order."""
    approaches = report.approaches
    slot, left, top, bottom = 92, 74, 24, 300
    width = left + slot * len(approaches) + 16
    height = 352

    pooled = [v for a in approaches for v in report.aggregates[a].per_repeat
              if v is not None]
    if pooled:
        vmin, vmax = min(pooled), max(pooled)
        pad = 0.05 * (vmax - vmin) if vmax > vmin else 0.5
        vmin, vmax = vmin - pad, vmax + pad
    else:
        vmin, vmax = 0.0, 1.0

    def y(v: float) -> float:
        return bottom - (v - vmin) / (vmax - vmin) * (bottom - top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="14">robustness bias score per approach '
        f'({report.repeats} repeats)</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="#333"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{width - 12}" y2="{bottom}" stroke="#333"/>',
    ]
    for tick in np.linspace(vmin, vmax, 5):
        ty = y(float(tick))
        parts.append(f'<line x1="{left - 4}" y1="{ty:.2f}" x2="{left}" y2="{ty:.2f}" '
                     f'stroke="#333"/>')
        parts.append(f'<text x="{left - 8}" y="{ty + 4:.2f}" text-anchor="end">'
                     f'{tick:.3f}</text>')

    half = 22
    for i, a in enumerate(approaches):
        cx = left + slot * i + slot / 2
        values = [v for v in report.aggregates[a].per_repeat if v is not None]
        parts.append(f'<g id="box-{a}">')
        parts.append(f'<text x="{cx:.2f}" y="{bottom + 18}" text-anchor="middle">'
                     f'{a}</text>')
        if values:
            q1, q2, q3 = (float(q) for q in np.percentile(values, (25, 50, 75)))
            lo, hi = min(values), max(values)
            parts.append(f'<line x1="{cx:.2f}" y1="{y(lo):.2f}" x2="{cx:.2f}" '
                         f'y2="{y(hi):.2f}" stroke="#333"/>')
            for cap in (lo, hi):
                parts.append(f'<line x1="{cx - half / 2:.2f}" y1="{y(cap):.2f}" '
                             f'x2="{cx + half / 2:.2f}" y2="{y(cap):.2f}" stroke="#333"/>')
            parts.append(f'<rect x="{cx - half:.2f}" y="{y(q3):.2f}" width="{2 * half}" '
                         f'height="{max(y(q1) - y(q3), 0.5):.2f}" fill="#9db8d2" '
                         f'stroke="#333"/>')
            parts.append(f'<line x1="{cx - half:.2f}" y1="{y(q2):.2f}" '
                         f'x2="{cx + half:.2f}" y2="{y(q2):.2f}" stroke="#8b1a1a" '
                         f'stroke-width="2"/>')
        else:
            parts.append(f'<text x="{cx:.2f}" y="{(top + bottom) / 2:.2f}" '
                         f'text-anchor="middle">infeasible</text>')
        parts.append('</g>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"


def emit_report(report: ExperimentReport, out_dir, svg: bool = True) -> dict:
    """Write report.csv, runs.csv, report.json and (optionally) boxplot.svg.

    Timing lives in meta.json so the four report files depend only on the
    master seed and config.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report_csv": out / "report.csv", "runs_csv": out / "runs.csv",
             "report_json": out / "report.json"}
    write_report_csv(report, paths["report_csv"])
    write_runs_csv(report, paths["runs_csv"])
    with open(paths["report_json"], "w", encoding="utf-8") as fh:
        json.dump(report_to_json(report), fh, indent=2, sort_keys=True,
                  allow_nan=False)
        fh.write("\n")
    if svg:
        paths["boxplot_svg"] = out / "boxplot.svg"
        with open(paths["boxplot_svg"], "w", encoding="utf-8") as fh:
            fh.write(render_boxplot(report))
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump({"durations": report.durations}, fh, indent=2)
        fh.write("\n")
    paths["meta_json"] = out / "meta.json"
    return paths
