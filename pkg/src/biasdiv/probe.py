"""Noise probing: perturb correctly classified inputs with rising relative
noise, collect misclassifications, and score per-class robustness bias.

Noise is relative: a level of 0.05 perturbs feature j by up to 5% of that
feature's scale. Scales default to the max absolute value per feature over
the training data so zero-valued entries still receive noise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import BiasMetricError, ProbeError
from .mlp import Mlp, input_gradients, predict_batch
from .numerics import substream

DEFAULT_LEVELS = tuple(round(i / 100, 2) for i in range(1, 41))

RANDOM_SWEEP = "random_sweep"
GRADIENT_SIGN = "gradient_sign"
BOTH = "both"


def feature_scales(features: np.ndarray) -> np.ndarray:
    """Per-feature noise scale: max |value| over the given rows."""
    scales = np.abs(np.asarray(features, dtype=float)).max(axis=0)
    return scales


@dataclass(frozen=True)
class NoiseSpec:
    """Probe configuration: which relative levels to sweep, how many random
    variants per input, and which attack routes to run."""

    levels: tuple[float, ...] = DEFAULT_LEVELS
    samples_per_input: int = 20
    attack: str = BOTH
    per_sample_scale: bool = False   # scale noise by |x_j| of each input instead

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("need at least one noise level")
        if any(not 0.0 < v <= 1.0 for v in levels):
            raise ValueError("levels must lie in (0, 1]")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if self.samples_per_input < 1:
            raise ValueError("samples_per_input must be >= 1")
        if self.attack not in (RANDOM_SWEEP, GRADIENT_SIGN, BOTH):
            raise ValueError(f"unknown attack '{self.attack}'")

    @property
    def random_enabled(self) -> bool:
        return self.attack in (RANDOM_SWEEP, BOTH)

    @property
    def gradient_enabled(self) -> bool:
        return self.attack in (GRADIENT_SIGN, BOTH)


@dataclass(frozen=True)
class Counterexample:
    input_index: int
    true_class: int
    predicted_class: int
    level: float
    noisy_input: np.ndarray

    def __post_init__(self):
        if self.predicted_class == self.true_class:
            raise ValueError("a counterexample must be misclassified")


@dataclass
class ProbeReport:
    delta_x_max: float                 # largest all-safe relative noise level
    R: np.ndarray                      # per-class misclassified:correct variant ratio
    mu: np.ndarray                     # per-class misclassified variant percentage
    b_r: float                         # robustness bias score
    counterexamples: list[Counterexample]
    per_level_misclassification: dict[float, np.ndarray]   # level -> per-class counts
    probed_per_class: np.ndarray       # correctly classified clean inputs per class
    variants_per_class: np.ndarray     # noisy variants probed per class (all levels)


def apply_noise(x: np.ndarray, level: float, rng: np.random.Generator,
                scales: np.ndarray) -> np.ndarray:
    """Uniform L-inf noise: coordinate j moves by at most level * scales[j]."""
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    x = np.asarray(x, dtype=float)
    bound = level * np.asarray(scales, dtype=float)
    return x + rng.uniform(-bound, bound, size=x.shape)


def gradient_sign_attack(mlp: Mlp, x: np.ndarray, true_class: int, level: float,
                         scales: np.ndarray) -> np.ndarray:
    """Single-step gradient-sign perturbation at the given relative level."""
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    x = np.asarray(x, dtype=float)
    grad = input_gradients(mlp, x[None, :], np.array([true_class]))[0]
    return x + level * np.asarray(scales, dtype=float) * np.sign(grad)


def compute_bias(per_class_misclassified, per_class_correct):
    """R, mu and the bias score from per-class variant counts.

    b_r = max_i |R_i - mean_{j != i} R_j|; a single-class dataset has no
    other classes to compare against, so its score is 0.
    """
    m = np.asarray(per_class_misclassified, dtype=float)
    c = np.asarray(per_class_correct, dtype=float)
    if m.shape != c.shape or m.ndim != 1:
        raise ValueError("count vectors must be 1-D and the same length")
    if (m < 0).any() or (c < 0).any():
        raise ValueError("counts must be non-negative")
    for i, ci in enumerate(c):
        if ci == 0:
            raise BiasMetricError(
                f"class {i} has no correctly classified variants; ratio undefined")
    R = m / c
    mu = 100.0 * m / (m + c)
    L = len(R)
    if L == 1:
        return R, mu, 0.0
    total = R.sum()
    b_r = max(abs(R[i] - (total - R[i]) / (L - 1)) for i in range(L))
    return R, mu, float(b_r)


def noise_sweep(mlp: Mlp, test: Dataset, spec: NoiseSpec, seed: int,
                scales: np.ndarray | None = None) -> ProbeReport:
    """Probe every correctly classified input at every noise level.

    Each (input, level) pair draws from its own RNG sub-stream, so the
    report is identical no matter how the work is scheduled. `scales`
    should come from the training features; they default to the probed
    set's own scales when omitted.
    """
    if test.d != mlp.spec.d or test.L != mlp.spec.L:
        raise ValueError("model and dataset shapes disagree")
    if scales is None:
        scales = feature_scales(test.features)
    scales = np.asarray(scales, dtype=float)

    clean_pred, _ = predict_batch(mlp, test.features)
    correct_mask = clean_pred == test.labels
    probed_idx = np.flatnonzero(correct_mask)
    if len(probed_idx) == 0:
        raise ProbeError("the model classifies no input correctly; nothing to probe")

    X = test.features[probed_idx]
    y = test.labels[probed_idx]
    L = test.L
    probed_per_class = np.bincount(y, minlength=L)

    if spec.per_sample_scale:
        per_input_scales = np.abs(X)
    else:
        per_input_scales = np.broadcast_to(scales, X.shape)

    signs = None
    if spec.gradient_enabled:
        signs = np.sign(input_gradients(mlp, X, y))

    counterexamples: list[Counterexample] = []
    per_level: dict[float, np.ndarray] = {}
    misclassified = np.zeros(L, dtype=int)
    variants_total = np.zeros(L, dtype=int)
    first_bad_level = None

    for li, level in enumerate(spec.levels):
        variants, v_labels, v_rows = [], [], []
        if spec.random_enabled:
            for row, (idx, x) in enumerate(zip(probed_idx, X)):
                rng = substream(seed, "probe", int(idx), li)
                bound = level * per_input_scales[row]
                noise = rng.uniform(-bound, bound, size=(spec.samples_per_input, len(x)))
                variants.append(x + noise)
                v_labels.extend([y[row]] * spec.samples_per_input)
                v_rows.extend([row] * spec.samples_per_input)
        if spec.gradient_enabled:
            variants.append(X + level * per_input_scales * signs)
            v_labels.extend(y.tolist())
            v_rows.extend(range(len(X)))

        batch = np.vstack(variants)
        v_labels = np.array(v_labels)
        v_rows = np.array(v_rows)
        pred, _ = predict_batch(mlp, batch)
        wrong = pred != v_labels

        level_counts = np.bincount(v_labels[wrong], minlength=L)
        per_level[level] = level_counts
        misclassified += level_counts
        variants_total += np.bincount(v_labels, minlength=L)
        for pos in np.flatnonzero(wrong):
            counterexamples.append(Counterexample(
                input_index=int(probed_idx[v_rows[pos]]),
                true_class=int(v_labels[pos]),
                predicted_class=int(pred[pos]),
                level=level,
                noisy_input=batch[pos].copy(),
            ))
        if wrong.any() and first_bad_level is None:
            first_bad_level = li

    if first_bad_level is None:
        delta_x_max = spec.levels[-1]
    elif first_bad_level == 0:
        delta_x_max = 0.0
    else:
        delta_x_max = spec.levels[first_bad_level - 1]

    correct = variants_total - misclassified
    R, mu, b_r = compute_bias(misclassified, correct)
    return ProbeReport(
        delta_x_max=float(delta_x_max),
        R=R,
        mu=mu,
        b_r=b_r,
        counterexamples=counterexamples,
        per_level_misclassification=per_level,
        probed_per_class=probed_per_class,
        variants_per_class=variants_total,
    )


def probe_report_to_json(report: ProbeReport, class_names=None) -> dict:
    doc = {
        "delta_x_max": report.delta_x_max,
        "R": report.R.tolist(),
        "mu": report.mu.tolist(),
        "b_r": report.b_r,
        "probed_per_class": report.probed_per_class.tolist(),
        "variants_per_class": report.variants_per_class.tolist(),
        "counterexample_count": len(report.counterexamples),
        "per_level_misclassification": {
            f"{level:.2f}": counts.tolist()
            for level, counts in report.per_level_misclassification.items()
        },
    }
    if class_names is not None:
        doc["class_names"] = list(class_names)
    return doc


def save_probe_report(report: ProbeReport, path, class_names=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(probe_report_to_json(report, class_names), fh, indent=2)
        fh.write("\n")


def write_counterexamples_csv(report: ProbeReport, path, feature_names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input_index", "true_class", "predicted_class", "level"]
                        + list(feature_names))
        for cex in report.counterexamples:
            writer.writerow([cex.input_index, cex.true_class, cex.predicted_class,
                             f"{cex.level:.2f}"] + [repr(float(v)) for v in cex.noisy_input])
