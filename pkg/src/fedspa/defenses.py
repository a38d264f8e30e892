"""Server-side robust aggregation.

All defenses operate on deltas (local params minus the current global
model) for scale comparability, are deterministic given their inputs and
seed, and never modify the updates they exclude. Updates arrive as
objects carrying .client_id, .params and .sample_count (see the
federation module); only those attributes are used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .metrics import top_components

DEFENSE_KINDS = ("none", "multikrum", "foolsgold", "flame", "rflbat", "norm_clip")


@dataclass
class DefenseDecision:
    """Telemetry of one defense pass: who stayed, who went, with what weight."""

    kept_ids: list[int]
    excluded_ids: list[int]
    weights: dict[int, float]
    noise_sigma: float = 0.0
    notes: str = ""


def _deltas(updates, global_params):
    return [(u.client_id, u.params - global_params) for u in sorted(updates, key=lambda u: u.client_id)]


def _uniform_weights(ids):
    return {cid: 1.0 / len(ids) for cid in ids}


def multikrum(updates, global_params, f: int) -> DefenseDecision:
    """Keep the n-f-2 updates with the smallest sum of squared distances
    to their n-f-2 nearest neighbours; ties broken by lower client id."""
    n = len(updates)
    if n < f + 3:
        raise ConfigError(f"multikrum needs at least f+3={f + 3} updates, got {n}")
    pairs = _deltas(updates, global_params)
    ids = [cid for cid, _ in pairs]
    mat = np.stack([d for _, d in pairs]).astype(np.float64)
    sq = ((mat[:, None, :] - mat[None, :, :]) ** 2).sum(axis=2)
    keep_count = n - f - 2
    scores = []
    for i in range(n):
        others = np.delete(sq[i], i)
        scores.append(float(np.sort(others)[:keep_count].sum()))
    order = sorted(range(n), key=lambda i: (scores[i], ids[i]))
    kept = sorted(ids[i] for i in order[:keep_count])
    excluded = sorted(set(ids) - set(kept))
    return DefenseDecision(kept_ids=kept, excluded_ids=excluded, weights=_uniform_weights(kept))


def foolsgold(histories: list[tuple[int, np.ndarray]]) -> DefenseDecision:
    """Downweight clients whose cumulative updates stay mutually aligned.

    Follows the original recipe: pairwise cosine similarities, pardoning
    by the ratio of per-client maxima, 1-minus-max scores rescaled and
    sharpened through a logit. Everyone stays; sybil-like clients get
    weight near zero. Zero histories contribute weight 1 and sit out the
    similarity computation.
    """
    if not histories:
        raise ConfigError("foolsgold needs at least one history")
    ids = [cid for cid, _ in histories]
    notes = []
    if len(histories) == 1:
        return DefenseDecision(kept_ids=ids, excluded_ids=[], weights={ids[0]: 1.0})
    vecs = np.stack([h for _, h in histories]).astype(np.float64)
    norms = np.linalg.norm(vecs, axis=1)
    live = norms > 0
    alpha = np.ones(len(ids))
    if live.sum() >= 2:
        unit = vecs[live] / norms[live][:, None]
        cs = unit @ unit.T
        np.fill_diagonal(cs, 0.0)
        vmax = cs.max(axis=1)
        for i in range(len(cs)):
            for j in range(len(cs)):
                if i != j and vmax[j] > vmax[i] and vmax[j] > 0:
                    cs[i, j] *= vmax[i] / vmax[j]
        a = 1.0 - cs.max(axis=1)
        a = np.clip(a, 0.0, 1.0)
        if a.max() > 0:
            a = a / a.max()
        a[a == 1.0] = 0.99
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.log(a / (1.0 - a)) + 0.5
        a[~np.isfinite(a)] = 1.0
        a = np.clip(a, 0.0, 1.0)
        alpha[live] = a
    if not live.all():
        notes.append(f"zero histories treated as weight 1: {[ids[i] for i in np.flatnonzero(~live)]}")
    total = alpha.sum()
    if total <= 0:
        notes.append("all scores zero, falling back to uniform")
        alpha = np.ones(len(ids))
        total = alpha.sum()
    weights = {cid: float(w / total) for cid, w in zip(ids, alpha)}
    return DefenseDecision(kept_ids=list(ids), excluded_ids=[], weights=weights, notes="; ".join(notes))


def _average_linkage_two_clusters(dist: np.ndarray) -> list[list[int]]:
    """Agglomerate by average linkage until two clusters remain."""
    clusters = [[i] for i in range(len(dist))]
    while len(clusters) > 2:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                link = np.mean([dist[i, j] for i in clusters[a] for j in clusters[b]])
                key = (link, min(clusters[a]), min(clusters[b]))
                if best is None or key < best[0]:
                    best = (key, a, b)
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return clusters


def flame_lite(updates, global_params, noise_lambda: float, seed: int) -> tuple[np.ndarray, DefenseDecision]:
    """Two-way cosine clustering, norm clipping to the median, noisy average.

    Documented simplification of the density-clustering original: at
    desk scale the majority cluster of an average-linkage 2-way split
    plays the role of the admitted set. Noise sigma is
    noise_lambda * median kept-delta norm.
    """
    if len(updates) < 2:
        raise ConfigError(f"flame needs at least 2 updates, got {len(updates)}")
    pairs = _deltas(updates, global_params)
    ids = [cid for cid, _ in pairs]
    mat = np.stack([d for _, d in pairs]).astype(np.float64)
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = mat / safe[:, None]
    cos_dist = 1.0 - unit @ unit.T
    clusters = _average_linkage_two_clusters(cos_dist)
    sizes = [len(c) for c in clusters]
    if sizes[0] != sizes[1]:
        majority = clusters[int(np.argmax(sizes))]
    else:
        majority = min(clusters, key=lambda c: min(ids[i] for i in c))
    kept_idx = sorted(majority)
    kept_ids = [ids[i] for i in kept_idx]
    excluded = sorted(set(ids) - set(kept_ids))
    kept_norms = norms[kept_idx]
    median = float(np.median(kept_norms))
    scale = np.ones(len(kept_idx))
    over = kept_norms > median
    if median > 0:
        scale[over] = median / kept_norms[over]
    clipped = mat[kept_idx] * scale[:, None]
    avg = clipped.mean(axis=0)
    sigma = noise_lambda * median
    if sigma > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        avg = avg + rng.normal(0.0, sigma, size=avg.shape)
    aggregated = (global_params + avg).astype(np.float32)
    decision = DefenseDecision(
        kept_ids=kept_ids,
        excluded_ids=excluded,
        weights=_uniform_weights(kept_ids),
        noise_sigma=float(sigma),
    )
    return aggregated, decision


def rflbat_lite(updates, global_params, k_clusters: int, seed: int) -> DefenseDecision:
    """Keep the most compact k-means cluster in a 2-D principal projection."""
    n = len(updates)
    if k_clusters < 1 or k_clusters > n:
        raise ConfigError(f"k_clusters must be in [1, {n}], got {k_clusters}")
    pairs = _deltas(updates, global_params)
    ids = [cid for cid, _ in pairs]
    mat = np.stack([d for _, d in pairs]).astype(np.float64)
    centered = mat - mat.mean(axis=0)
    if float((centered**2).sum()) <= 1e-18:
        return DefenseDecision(
            kept_ids=list(ids), excluded_ids=[], weights=_uniform_weights(ids), notes="rank-deficient stack, keeping all"
        )
    comps, _ = top_components(mat, k=2)
    proj = centered @ comps.T
    labels = _kmeans(proj, k_clusters, seed)
    best_idx = None
    best_score = None
    for c in range(k_clusters):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        if members.size == 1:
            score = float("inf")
        else:
            pts = proj[members]
            d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
            score = float(d[np.triu_indices(members.size, k=1)].mean())
        if best_score is None or score < best_score or (score == best_score and min(members) < min(best_idx)):
            best_score = score
            best_idx = members
    if not np.isfinite(best_score):
        return DefenseDecision(
            kept_ids=list(ids), excluded_ids=[], weights=_uniform_weights(ids), notes="all clusters singletons, keeping all"
        )
    kept_ids = sorted(ids[i] for i in best_idx)
    excluded = sorted(set(ids) - set(kept_ids))
    return DefenseDecision(kept_ids=kept_ids, excluded_ids=excluded, weights=_uniform_weights(kept_ids))


def _kmeans(points: np.ndarray, k: int, seed: int, restarts: int = 10, iters: int = 100) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(points)
    best_labels = None
    best_inertia = None
    for _ in range(restarts):
        centers = points[rng.choice(n, size=k, replace=False)].copy()
        labels = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2).argmin(axis=1)
        for _ in range(iters):
            for c in range(k):
                members = points[labels == c]
                if len(members):
                    centers[c] = members.mean(axis=0)
            new_labels = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2).argmin(axis=1)
            if (new_labels == labels).all():
                break
            labels = new_labels
        inertia = float(((points - centers[labels]) ** 2).sum())
        if best_inertia is None or inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels.copy()
    return best_labels


def clip_updates(updates, global_params, bound: float):
    """Rescale deltas whose L2 norm exceeds bound; direction preserved."""
    if bound <= 0:
        raise ConfigError(f"clip bound must be positive, got {bound}")
    if not np.isfinite(bound):
        return list(updates)
    out = []
    for u in updates:
        delta = u.params - global_params
        norm = float(np.linalg.norm(delta))
        if norm > bound:
            u = type(u)(
                client_id=u.client_id,
                params=(global_params + delta * np.float32(bound / norm)).astype(np.float32),
                sample_count=u.sample_count,
            )
        out.append(u)
    return out
