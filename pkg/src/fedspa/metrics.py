"""Evaluation: accuracy, attack success rate, persistence, feature diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net
from .attacks import TriggerSpec, apply_trigger
from .data import Dataset
from .errors import NumericError


def predictions(spec: net.NetworkSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Argmax class predictions; ties go to the lowest class index."""
    return net.forward(spec, params, inputs).argmax(axis=1)


def accuracy(spec: net.NetworkSpec, params: np.ndarray, testset: Dataset) -> tuple[float, np.ndarray]:
    """Clean accuracy and the [true x predicted] confusion matrix."""
    if len(testset) == 0:
        raise ValueError("empty test set")
    preds = predictions(spec, params, testset.inputs)
    c = testset.class_count
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (testset.labels, preds), 1)
    return float(np.trace(confusion) / len(testset)), confusion


def asr(spec: net.NetworkSpec, params: np.ndarray, testset: Dataset, trig: TriggerSpec, target_label: int) -> float:
    """Fraction of triggered non-target test samples predicted as the target.

    True-target samples are excluded from both numerator and denominator.
    """
    mask = testset.labels != target_label
    if not mask.any():
        raise NumericError(f"ASR undefined: test set only contains target class {target_label}")
    triggered = apply_trigger(testset.inputs[mask], trig)
    preds = predictions(spec, params, triggered)
    return float((preds == target_label).mean())


@dataclass
class PersistenceCurve:
    """ASR trajectory re-indexed to rounds elapsed since the attack window closed."""

    series: list[tuple[int, float]]
    peak: float | None
    half_life: float | None  # rounds after window end; inf = never halved

    def asr_at_or_after(self, elapsed: int) -> float | None:
        vals = [a for e, a in self.series if e >= elapsed]
        return vals[0] if vals else None


def persistence_curve(records, window_end: int) -> PersistenceCurve:
    """Build the post-window persistence summary from round records.

    Records need .round and .asr (may be None on non-evaluated rounds).
    Half-life is the first elapsed round where ASR drops below half the
    post-window peak, or inf when it never does.
    """
    series = [
        (r.round - window_end, float(r.asr))
        for r in records
        if r.round >= window_end and getattr(r, "asr", None) is not None
    ]
    series.sort()
    if not series:
        return PersistenceCurve(series=[], peak=None, half_life=None)
    peak = max(a for _, a in series)
    half_life: float = float("inf")
    for elapsed, value in series:
        if value < 0.5 * peak:
            half_life = float(elapsed)
            break
    return PersistenceCurve(series=series, peak=peak, half_life=half_life)


def top_components(rows: np.ndarray, k: int = 2, iters: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Top-k principal directions and per-component explained variance.

    Deterministic power iteration with deflation; component signs are
    normalized so the largest-magnitude coordinate is positive.
    """
    rows = np.asarray(rows, dtype=np.float64)
    centered = rows - rows.mean(axis=0)
    total_var = float((centered**2).sum()) / len(rows)
    if total_var <= 1e-18:
        raise NumericError("degenerate projection: embeddings have zero variance")
    rng = np.random.Generator(np.random.PCG64(1234567))
    comps = []
    explained = []
    work = centered.copy()
    for _ in range(k):
        v = rng.standard_normal(rows.shape[1])
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = work.T @ (work @ v)
            norm = np.linalg.norm(w)
            if norm == 0:
                break
            v = w / norm
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        comps.append(v)
        proj = work @ v
        explained.append(float((proj**2).sum()) / len(rows) / total_var)
        work = work - np.outer(proj, v)
    return np.stack(comps), np.array(explained)


def feature_projection(
    spec: net.NetworkSpec, params: np.ndarray, samples: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, float]:
    """2-D principal projection of sample embeddings.

    Returns ([n x 2] coordinates, total variance explained by the pair).
    """
    if len(samples) < 3:
        raise ValueError(f"need at least 3 samples, got {len(samples)}")
    emb = net.embed(spec, params, samples)
    comps, explained = top_components(emb, k=2)
    centered = emb - emb.mean(axis=0)
    return centered @ comps.T, float(explained.sum())


def cluster_alignment_score(
    spec: net.NetworkSpec,
    params: np.ndarray,
    poisoned_inputs: np.ndarray,
    clean_inputs_by_class: dict[int, np.ndarray],
    target_label: int,
) -> float:
    """How deep poisoned embeddings sit inside the target-class cluster.

    Ratio of the mean distance to the target-class clean centroid over
    the mean distance to each point's nearest non-target centroid;
    below 1 means trigger features live inside the target cluster.
    """
    if target_label not in clean_inputs_by_class:
        raise ValueError(f"no clean samples for target class {target_label}")
    centroids = {c: net.embed(spec, params, x).mean(axis=0) for c, x in clean_inputs_by_class.items()}
    emb = net.embed(spec, params, poisoned_inputs)
    d_target = np.linalg.norm(emb - centroids[target_label], axis=1)
    others = np.stack([cent for c, cent in sorted(centroids.items()) if c != target_label])
    if len(others) == 0:
        raise ValueError("need at least one non-target class")
    d_other = np.linalg.norm(emb[:, None, :] - others[None, :, :], axis=2).min(axis=1)
    denom = float(d_other.mean())
    if denom == 0:
        return float("inf") if d_target.mean() > 0 else 1.0
    return float(d_target.mean() / denom)
