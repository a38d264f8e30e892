"""Distribution and vector distances with analytic gradients.

The sliced distance between two embedding populations is the square
root of the mean, over random unit directions, of the 1-D Wasserstein-1
distance between the projected samples. Per-slice W1 uses sorted
matching for equal sample counts and quantile-midpoint interpolation at
max(n, m) evenly spaced midpoints otherwise; gradients hold the sort
permutation fixed (subgradient), with ties broken by original row index
via stable sorts.

Embedding sets are plain [n x d] arrays. All internal math runs in
float64 regardless of input dtype so gradients survive finite-difference
checks; callers cast results down as needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

_NORM_FLOOR = 1e-12
_VAR_FLOOR = 1e-6


@dataclass(frozen=True)
class SliceBasis:
    """Unit projection directions, one per row."""

    directions: np.ndarray
    seed: int


def sample_slices(d: int, s: int, seed: int) -> SliceBasis:
    """s directions drawn i.i.d. uniform on the unit sphere in R^d."""
    if d < 1 or s < 1:
        raise ValueError(f"need d >= 1 and s >= 1, got d={d}, s={s}")
    rng = np.random.Generator(np.random.PCG64(seed))
    dirs = rng.standard_normal((s, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return SliceBasis(directions=dirs, seed=seed)


def exact_w1_1d(a, b) -> float:
    """1-D Wasserstein-1 between empirical distributions.

    Integrates |quantile_a - quantile_b| over the merged quantile grid,
    which is exact for step quantile functions of arbitrary sizes.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("exact_w1_1d requires non-empty samples")
    na, nb = a.size, b.size
    cuts = np.union1d(np.arange(1, na) / na, np.arange(1, nb) / nb)
    edges = np.concatenate(([0.0], cuts, [1.0]))
    mids = (edges[:-1] + edges[1:]) / 2
    widths = np.diff(edges)
    ia = np.minimum((mids * na).astype(np.intp), na - 1)
    ib = np.minimum((mids * nb).astype(np.intp), nb - 1)
    return float(np.sum(widths * np.abs(a[ia] - b[ib])))


def _as_set(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty [n x d] matrix, got shape {arr.shape}")
    return arr


def sliced_wasserstein(a_set, b_set, basis: SliceBasis, grads: bool = False):
    """Sliced distance between two embedding sets, optionally with gradients.

    Returns the scalar, or (scalar, grad_a, grad_b) when grads=True.
    The gradient at exact distance zero is defined as zero.
    """
    a = _as_set(a_set, "a_set")
    b = _as_set(b_set, "b_set")
    dirs = basis.directions
    if a.shape[1] != b.shape[1] or a.shape[1] != dirs.shape[1]:
        raise ValueError(
            f"dimension mismatch: a {a.shape[1]}, b {b.shape[1]}, basis {dirs.shape[1]}"
        )
    na, nb = a.shape[0], b.shape[0]
    n_slices = dirs.shape[0]
    proj_a = a @ dirs.T
    proj_b = b @ dirs.T
    order_a = np.argsort(proj_a, axis=0, kind="stable")
    order_b = np.argsort(proj_b, axis=0, kind="stable")
    cols = np.arange(n_slices)
    sorted_a = proj_a[order_a, cols]
    sorted_b = proj_b[order_b, cols]
    if na == nb:
        rows_a, rows_b = order_a, order_b
        qa, qb = sorted_a, sorted_b
    else:
        m = max(na, nb)
        mids = (np.arange(m) + 0.5) / m
        ja = np.minimum((mids * na).astype(np.intp), na - 1)
        jb = np.minimum((mids * nb).astype(np.intp), nb - 1)
        rows_a, rows_b = order_a[ja], order_b[jb]
        qa, qb = sorted_a[ja], sorted_b[jb]
    diffs = qa - qb
    value = float(np.sqrt(np.abs(diffs).mean()))
    if not grads:
        return value
    grad_a = np.zeros_like(a)
    grad_b = np.zeros_like(b)
    if value > 0.0:
        m = diffs.shape[0]
        scale = 1.0 / (2.0 * value * n_slices * m)
        contrib = scale * np.sign(diffs)
        col_idx = np.broadcast_to(cols, diffs.shape)
        gpa = np.zeros((na, n_slices))
        gpb = np.zeros((nb, n_slices))
        np.add.at(gpa, (rows_a, col_idx), contrib)
        np.add.at(gpb, (rows_b, col_idx), -contrib)
        grad_a = gpa @ dirs
        grad_b = gpb @ dirs
    return value, grad_a, grad_b


def proj_distance(a, b, grads: bool = False):
    """Norm of the component of a orthogonal to b; scale-free in b."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    bb = float(b @ b)
    if bb <= _NORM_FLOOR**2:
        raise NumericError("degenerate reference vector (norm <= 1e-12), dead embedding")
    coef = float(a @ b) / bb
    resid = a - coef * b
    value = float(np.linalg.norm(resid))
    if not grads:
        return value
    if value == 0.0:
        return value, np.zeros_like(a), np.zeros_like(b)
    # resid is orthogonal to b, which collapses the chain rule to these
    # two terms
    grad_a = resid / value
    grad_b = -coef * resid / value
    return value, grad_a, grad_b


def _pairwise_l2(a, b, grads):
    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    value = float(dist.mean())
    if not grads:
        return value
    weight = np.zeros_like(dist)
    nonzero = dist > 0
    weight[nonzero] = 1.0 / (dist[nonzero] * dist.size)
    grad_a = (diff * weight[:, :, None]).sum(axis=1)
    grad_b = -(diff * weight[:, :, None]).sum(axis=0)
    return value, grad_a, grad_b


def _pairwise_cosine(a, b, grads):
    norm_a = np.linalg.norm(a, axis=1)
    norm_b = np.linalg.norm(b, axis=1)
    safe_a = np.maximum(norm_a, _NORM_FLOOR)
    safe_b = np.maximum(norm_b, _NORM_FLOOR)
    cos = (a @ b.T) / (safe_a[:, None] * safe_b[None, :])
    value = float((1.0 - cos).mean())
    if not grads:
        return value
    live = (norm_a[:, None] > _NORM_FLOOR) & (norm_b[None, :] > _NORM_FLOOR)
    scale = np.where(live, 1.0 / cos.size, 0.0)
    inv = scale / (safe_a[:, None] * safe_b[None, :])
    # d(1-cos_ij)/da_i = -(b_j/(|a||b|) - cos_ij * a_i/|a|^2)
    grad_a = -(inv @ b) + ((scale * cos) / safe_a[:, None] ** 2).sum(axis=1)[:, None] * a
    grad_b = -(inv.T @ a) + ((scale * cos) / safe_b[None, :] ** 2).sum(axis=0)[:, None] * b
    return value, grad_a, grad_b


def _gaussian_kl(a, b, grads):
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("kl distance needs at least 2 rows per set to fit variances")
    na, nb = a.shape[0], b.shape[0]
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    raw_va, raw_vb = a.var(axis=0), b.var(axis=0)
    va = np.maximum(raw_va, _VAR_FLOOR)
    vb = np.maximum(raw_vb, _VAR_FLOOR)
    delta = mu_a - mu_b
    value = float(0.5 * np.sum(np.log(vb / va) + (va + delta**2) / vb - 1.0))
    if not grads:
        return value
    live_a = raw_va > _VAR_FLOOR
    live_b = raw_vb > _VAR_FLOOR
    d_mu_a = delta / vb
    d_va = np.where(live_a, 0.5 * (1.0 / vb - 1.0 / va), 0.0)
    grad_a = d_mu_a / na + d_va * 2.0 * (a - mu_a) / na
    d_mu_b = -delta / vb
    d_vb = np.where(live_b, 0.5 * (1.0 / vb - (va + delta**2) / vb**2), 0.0)
    grad_b = d_mu_b / nb + d_vb * 2.0 * (b - mu_b) / nb
    return value, grad_a, grad_b


def alt_distance(metric: str, a_set, b_set, grads: bool = False):
    """Ablation alternatives to the sliced distance: l2, cosine, kl.

    l2 and cosine average over all cross pairs; kl is the closed form
    between diagonal Gaussians fitted to each set (variances floored).
    """
    a = _as_set(a_set, "a_set")
    b = _as_set(b_set, "b_set")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if metric == "l2":
        return _pairwise_l2(a, b, grads)
    if metric == "cosine":
        return _pairwise_cosine(a, b, grads)
    if metric == "kl":
        return _gaussian_kl(a, b, grads)
    raise ValueError(f"unknown metric {metric!r}")
