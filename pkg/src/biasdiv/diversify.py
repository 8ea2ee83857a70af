"""Dataset diversification: per-class bound construction, overlap
tightening, top-k feature clustering, synthetic sampling, redundancy
minimization and correlation validation.

The pipeline widens each class's per-feature bounds by the measured noise
tolerance, carves away regions contested between classes, narrows the most
compact features to their dominant cluster, then draws synthetic rows
uniformly inside the surviving region.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ORIGINAL, SYNTHETIC, ClassPartition, Dataset, segment_by_class
from .errors import GenerationError
from .numerics import (
    Interval,
    IntervalSet,
    kmeans,
    pearson_corr,
    relax_interval,
    round_half_up,
    substream,
)
from .probe import ProbeReport, feature_scales

FULL = "full"
SYNTH_ONLY = "synth_only"
DELETE_ONLY = "delete_only"


def derive_seed(seed: int, *labels) -> int:
    """Stable integer seed for a named pipeline stage."""
    return int(substream(seed, *labels).integers(2 ** 63))


@dataclass(frozen=True)
class ClassBounds:
    """Per class, per feature: the region the class is allowed to occupy.

    `notes` records reversion events (a tightening or intersection that
    would have emptied a region) so reruns can be audited.
    """

    per_class: tuple[tuple[IntervalSet, ...], ...]   # [class][feature]
    notes: tuple[str, ...] = ()

    @property
    def n_classes(self) -> int:
        return len(self.per_class)

    @property
    def n_features(self) -> int:
        return len(self.per_class[0])

    def get(self, class_index: int, feature: int) -> IntervalSet:
        return self.per_class[class_index][feature]


@dataclass(frozen=True)
class DiversifyConfig:
    top_k: int
    removal_fraction: float = 0.5
    corr_threshold: float = 25.0
    clusters: int = 2                 # for compactness scoring and final bounds
    synth_base: int | None = None     # None: original minority-class size
    max_retries: int = 100
    mode: str = FULL

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0.0 <= self.removal_fraction < 1.0:
            raise ValueError("removal_fraction must be in [0, 1)")
        if self.corr_threshold <= 0:
            raise ValueError("corr_threshold must be positive")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")
        if self.synth_base is not None and self.synth_base < 1:
            raise ValueError("synth_base must be >= 1")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        if self.mode not in (FULL, SYNTH_ONLY, DELETE_ONLY):
            raise ValueError(f"unknown mode '{self.mode}'")


@dataclass
class ValidationReport:
    corr_diff: float
    attempts: int
    passed: bool
    diagnostic: str | None = None


@dataclass
class DiversifiedDataset:
    dataset: Dataset
    validation: ValidationReport
    bounds: ClassBounds               # final per-class sampling regions
    top_features: list[int]
    chi: np.ndarray                   # synthetic rows requested per class
    removed_per_class: np.ndarray     # rows dropped by redundancy minimization


# ---------------------------------------------------------------------------
# Bound construction
# ---------------------------------------------------------------------------

def global_extremum(part: ClassPartition, delta_x_max: float,
                    scales: np.ndarray) -> ClassBounds:
    """Per-class feature extrema widened by the relative noise tolerance."""
    scales = np.asarray(scales, dtype=float)
    per_class = []
    for ds in part.parts:
        sets = []
        for f in range(ds.d):
            col = ds.features[:, f]
            base = Interval(float(col.min()), float(col.max()))
            sets.append(IntervalSet((relax_interval(base, delta_x_max * scales[f]),)))
        per_class.append(tuple(sets))
    return ClassBounds(tuple(per_class))


def _match_rule(p: Interval, q: Interval):
    """Tightening rule for one interval pair, if any applies.

    Roles follow the geometry, not class order: the lower-starting interval
    plays "i". All comparisons strict; shared endpoints fire nothing.
    """
    if p.lo == q.lo:
        return None
    low, high, swapped = (p, q, False) if p.lo < q.lo else (q, p, True)
    if low.lo < high.lo < low.hi < high.hi:
        new_low = (Interval(low.lo, high.lo),)
        new_high = (Interval(low.hi, high.hi),)
        return new_low, new_high, swapped
    if low.lo < high.lo and high.hi < low.hi:
        new_low = (Interval(low.lo, high.lo), Interval(high.hi, low.hi))
        new_high = (high,)
        return new_low, new_high, swapped
    return None


def _tighten_pair(sa: IntervalSet, sb: IntervalSet):
    """Fixpoint of the pairwise rules between two classes on one feature."""
    a, b = list(sa.intervals), list(sb.intervals)
    fired = False
    for _ in range(1000):
        hit = None
        for i, p in enumerate(a):
            for j, q in enumerate(b):
                rule = _match_rule(p, q)
                if rule is not None:
                    hit = (i, j, rule)
                    break
            if hit:
                break
        if hit is None:
            break
        i, j, (new_low, new_high, swapped) = hit
        if swapped:
            a[i:i + 1] = list(new_high)
            b[j:j + 1] = list(new_low)
        else:
            a[i:i + 1] = list(new_low)
            b[j:j + 1] = list(new_high)
        a.sort(key=lambda iv: iv.lo)
        b.sort(key=lambda iv: iv.lo)
        fired = True
    return IntervalSet(tuple(a)), IntervalSet(tuple(b)), fired


def tighten_overlaps(bounds: ClassBounds) -> ClassBounds:
    """Resolve inter-class overlaps feature by feature.

    Partially overlapping classes both surrender the contested region;
    a class completely containing another keeps everything except the
    contained class's span (its interval becomes a two-piece union).
    """
    per_class = [list(sets) for sets in bounds.per_class]
    notes = list(bounds.notes)
    L = len(per_class)
    d = len(per_class[0]) if per_class else 0
    for f in range(d):
        for a in range(L):
            for b in range(a + 1, L):
                before_a, before_b = per_class[a][f], per_class[b][f]
                try:
                    na, nb, fired = _tighten_pair(before_a, before_b)
                except ValueError:
                    # a rule emptied or corrupted a region; keep the originals
                    notes.append(f"tightening reverted for classes {a},{b} feature {f}")
                    continue
                per_class[a][f], per_class[b][f] = na, nb
                if fired:
                    notes.append(f"tightened classes {a},{b} on feature {f}")
    return ClassBounds(tuple(tuple(sets) for sets in per_class), tuple(notes))


def _dominant_cluster_values(values: np.ndarray, c: int, seed: int) -> np.ndarray:
    """Members of the largest 1-D cluster (ties: lowest cluster index)."""
    values = np.asarray(values, dtype=float)
    k = min(c, len(values))
    result = kmeans(values[:, None], k=k, seed=seed)
    counts = np.bincount(result.assignments, minlength=k)
    dominant = int(np.argmax(counts))
    return values[result.assignments == dominant], result.centroids[dominant, 0]


def top_k_features(part: ClassPartition, k: int, c: int, seed: int) -> list[int]:
    """The k features whose per-class values cluster most tightly.

    Compactness of a feature is the worst case over classes of the distance
    from the dominant cluster's centroid to its farthest member; smaller
    means the classes sit in tighter, more characteristic ranges.
    """
    d = part.parts[0].d
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    compactness = np.zeros(d)
    for f in range(d):
        worst = 0.0
        for i, ds in enumerate(part.parts):
            members, centroid = _dominant_cluster_values(
                ds.features[:, f], c, derive_seed(seed, "topk", f, i))
            worst = max(worst, float(np.abs(members - centroid).max()))
        compactness[f] = worst
    order = np.argsort(compactness, kind="stable")   # ties -> lower index
    return sorted(int(f) for f in order[:k])


def final_bounds(bounds: ClassBounds, top: list[int], part: ClassPartition,
                 c: int, seed: int) -> ClassBounds:
    """Narrow each top feature to the span of its class's dominant cluster."""
    per_class = [list(sets) for sets in bounds.per_class]
    notes = list(bounds.notes)
    for f in top:
        for i, ds in enumerate(part.parts):
            members, _ = _dominant_cluster_values(
                ds.features[:, f], c, derive_seed(seed, "final", f, i))
            window = Interval(float(members.min()), float(members.max()))
            clipped = per_class[i][f].intersect(window)
            if clipped is None:
                notes.append(
                    f"final bounds reverted for class {i} feature {f}: "
                    f"dominant cluster lies outside the tightened region")
            else:
                per_class[i][f] = clipped
    return ClassBounds(tuple(tuple(sets) for sets in per_class), tuple(notes))


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def synth_counts(mu, base: int) -> np.ndarray:
    """Synthetic rows per class, proportional to misclassification rates.

    The least-misclassified (but still affected) class anchors the scale at
    `base`; unaffected classes receive the base count as well. A fully
    clean probe requests nothing.
    """
    mu = np.asarray(mu, dtype=float)
    if (mu < 0).any():
        raise ValueError("mu percentages must be non-negative")
    if base < 1:
        raise ValueError("base must be >= 1")
    positive = mu[mu > 0]
    if len(positive) == 0:
        return np.zeros(len(mu), dtype=int)
    anchor = positive.min()
    return np.array([
        base if m == 0 else round_half_up(base * m / anchor)
        for m in mu
    ], dtype=int)


def sample_synthetic(bounds_i, count: int, rng: np.random.Generator) -> np.ndarray:
    """count x d matrix drawn coordinate-wise from the class's regions."""
    sets = list(bounds_i)
    for f, s in enumerate(sets):
        if s is None or not isinstance(s, IntervalSet):
            raise GenerationError(f"feature {f} has no region to sample from")
    if count < 0:
        raise ValueError("count must be >= 0")
    out = np.empty((count, len(sets)))
    for f, s in enumerate(sets):
        out[:, f] = s.sample(rng, count)
    return out


def minimize_redundancy(class_rows: np.ndarray, removal_fraction: float,
                        seed: int) -> np.ndarray:
    """Indices of one representative row per cluster, ascending.

    Clustering into round(m * (1 - x)) groups and keeping the row nearest
    each centroid removes about a fraction x of near-duplicate rows.
    """
    rows = np.asarray(class_rows, dtype=float)
    if rows.ndim != 2 or len(rows) < 1:
        raise ValueError("need a non-empty 2-D row matrix")
    if not 0.0 <= removal_fraction < 1.0:
        raise ValueError("removal_fraction must be in [0, 1)")
    m = len(rows)
    k = max(1, round_half_up(m * (1.0 - removal_fraction)))
    if k >= m:
        return np.arange(m)
    result = kmeans(rows, k=k, seed=seed)
    retained = []
    for cluster in range(k):
        members = np.flatnonzero(result.assignments == cluster)
        dists = ((rows[members] - result.centroids[cluster]) ** 2).sum(axis=1)
        retained.append(int(members[np.argmin(dists)]))   # ties -> lowest index
    return np.array(sorted(retained), dtype=int)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _corr_diff(a: np.ndarray, b: np.ndarray) -> float:
    ca, cb = pearson_corr(a), pearson_corr(b)
    skip = ca.zero_variance_flags | cb.zero_variance_flags
    d = a.shape[1]
    worst = 0.0
    for p in range(d):
        for q in range(p + 1, d):
            if skip[p] or skip[q]:
                continue
            denom = max(abs(ca.coefficients[p, q]), 0.1)
            worst = max(worst, abs(cb.coefficients[p, q] - ca.coefficients[p, q])
                        / denom * 100.0)
    return float(worst)


def validate_synthetic(synth: np.ndarray, original_train: np.ndarray,
                       t: float) -> ValidationReport:
    """Single-attempt check that synthetic rows keep the original feature
    correlations within t percent."""
    synth = np.asarray(synth, dtype=float)
    if len(synth) < 2:
        return ValidationReport(
            corr_diff=math.inf, attempts=1, passed=False,
            diagnostic=f"only {len(synth)} synthetic row(s); need >= 2 to correlate")
    diff = _corr_diff(np.asarray(original_train, dtype=float), synth)
    return ValidationReport(corr_diff=diff, attempts=1, passed=bool(diff <= t))


def suggest_threshold(train: np.ndarray, test: np.ndarray) -> float:
    """Correlation drift between train and test, a natural tolerance for
    validate_synthetic. Warns when the drift is so large that the features
    may simply be independent."""
    t = _corr_diff(np.asarray(train, dtype=float), np.asarray(test, dtype=float))
    if t > 100.0:
        warnings.warn(
            f"train/test correlation difference is {t:.1f}%; the features may "
            "simply be independent, making correlation validation uninformative")
    return t


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def diversify(train: Dataset, probe: ProbeReport, cfg: DiversifyConfig,
              seed: int) -> DiversifiedDataset:
    """Full alleviation pipeline; see module docstring for the stages.

    Synthesis is retried with fresh sub-streams until the correlation check
    passes or max_retries is exhausted; the best attempt is kept either way.
    """
    if cfg.top_k > train.d:
        raise ValueError(f"top_k ({cfg.top_k}) exceeds feature count ({train.d})")
    part = segment_by_class(train)
    scales = feature_scales(train.features)

    bounds = global_extremum(part, probe.delta_x_max, scales)
    bounds = tighten_overlaps(bounds)
    top = top_k_features(part, cfg.top_k, cfg.clusters, seed)
    bounds = final_bounds(bounds, top, part, cfg.clusters, seed)

    counts = train.class_counts()
    if cfg.mode == DELETE_ONLY:
        chi = np.zeros(train.L, dtype=int)
        validation = ValidationReport(0.0, 0, True, "synthesis skipped (delete_only)")
        synth_per_class = [np.empty((0, train.d)) for _ in range(train.L)]
    else:
        base = cfg.synth_base if cfg.synth_base is not None else int(counts.min())
        chi = synth_counts(probe.mu, base)
        if chi.sum() == 0:
            validation = ValidationReport(0.0, 0, True, "probe saw no misclassification")
            synth_per_class = [np.empty((0, train.d)) for _ in range(train.L)]
        else:
            synth_per_class, validation = _generate_validated(
                bounds, chi, train.features, cfg, seed)

    blocks = []
    removed = np.zeros(train.L, dtype=int)
    for c in range(train.L):
        orig = part.parts[c]
        combined = np.vstack([orig.features, synth_per_class[c]])
        prov = np.concatenate([orig.provenance,
                               np.full(len(synth_per_class[c]), SYNTHETIC, dtype=object)])
        if cfg.mode == SYNTH_ONLY:
            keep = np.arange(len(combined))
        else:
            keep = minimize_redundancy(combined, cfg.removal_fraction,
                                       derive_seed(seed, "rm", c))
        removed[c] = len(combined) - len(keep)
        blocks.append((combined[keep], prov[keep]))

    features = np.vstack([b[0] for b in blocks])
    labels = np.concatenate([np.full(len(b[0]), c, dtype=int)
                             for c, b in enumerate(blocks)])
    provenance = np.concatenate([b[1] for b in blocks])
    ds = Dataset(features, labels, train.class_names, train.feature_names, provenance)
    return DiversifiedDataset(ds, validation, bounds, top, chi, removed)


def _generate_validated(bounds: ClassBounds, chi: np.ndarray,
                        original: np.ndarray, cfg: DiversifyConfig, seed: int):
    best_rows, best_report = None, None
    for attempt in range(1, cfg.max_retries + 1):
        rows = [
            sample_synthetic(bounds.per_class[c], int(chi[c]),
                             substream(seed, "synth", attempt, c))
            for c in range(len(chi))
        ]
        stacked = np.vstack(rows)
        report = validate_synthetic(stacked, original, cfg.corr_threshold)
        report.attempts = attempt
        if best_report is None or report.corr_diff < best_report.corr_diff:
            best_rows, best_report = rows, report
        if report.passed:
            return rows, report
        if len(stacked) < 2:
            break   # retrying cannot change the row count
    return best_rows, best_report


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def bounds_to_json(bounds: ClassBounds, class_names=None, feature_names=None) -> dict:
    doc = {
        "per_class": [
            [s.to_json() for s in sets] for sets in bounds.per_class
        ],
        "notes": list(bounds.notes),
    }
    if class_names is not None:
        doc["class_names"] = list(class_names)
    if feature_names is not None:
        doc["feature_names"] = list(feature_names)
    return doc


def save_diversify_report(dd: DiversifiedDataset, path) -> None:
    corr_diff = dd.validation.corr_diff
    doc = {
        "validation": {
            "corr_diff": corr_diff if math.isfinite(corr_diff) else None,
            "attempts": dd.validation.attempts,
            "passed": dd.validation.passed,
            "diagnostic": dd.validation.diagnostic,
        },
        "top_features": list(dd.top_features),
        "chi": dd.chi.tolist(),
        "removed_per_class": dd.removed_per_class.tolist(),
        "bounds": bounds_to_json(dd.bounds, dd.dataset.class_names,
                                 dd.dataset.feature_names),
        "class_counts": dd.dataset.class_counts().tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
