"""Trigger machinery and the three attacker behaviours.

vanilla: poison a fraction of the shard (trigger + relabel) and run the
standard local training loop. pgd: same, but project the params back
onto an L2 ball around the global model after every epoch. spa: two
phases against a frozen copy of the global model — first optimize the
trigger so triggered inputs score as the target class while staying
directionally consistent with clean target features, then train the
local model so embeddings of triggered inputs match the embedding
population of real target samples, with a distillation-style utility
term anchoring clean embeddings to the teacher. Labels are never used
in the injection phase and the classifier head is left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import distances, net
from .data import Dataset
from .errors import ConfigError, DataFormatError, NumericError

TRIGGER_MAGIC = "fedspa-trigger"

TRIGGER_MODES = ("patch", "blend", "additive")
ALIGN_METRICS = ("swd", "l2", "cosine", "kl")
CONSTRAINT_MODES = ("feature_consistency", "linf")


@dataclass
class TriggerSpec:
    """Trigger pattern plus how it is stamped onto an input.

    patch: overwrite coordinates under a binary mask. blend: convex mix
    with strength beta. additive: add and clip back into [0,1].
    """

    mode: str
    pattern: np.ndarray
    blend_strength: float = 0.33
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in TRIGGER_MODES:
            raise ConfigError(f"unknown trigger mode {self.mode!r}")
        self.pattern = np.asarray(self.pattern, dtype=np.float32).ravel()
        if not np.isfinite(self.pattern).all():
            raise ConfigError("trigger pattern must be finite")
        if not 0.0 < self.blend_strength <= 1.0:
            raise ConfigError(f"blend_strength must be in (0,1], got {self.blend_strength}")
        if self.mode == "patch":
            if self.mask is None:
                raise ConfigError("patch trigger requires a mask")
            self.mask = np.asarray(self.mask, dtype=np.float32).ravel()
            if self.mask.shape != self.pattern.shape:
                raise ConfigError("mask and pattern shapes differ")
            if not np.isin(self.mask, (0.0, 1.0)).all():
                raise ConfigError("patch mask must be binary")


@dataclass
class AttackConfig:
    kind: str
    target_label: int
    poison_ratio: float = 0.5
    utility_weight: float = 1.0
    enhance_steps: int = 200
    trigger_lr: float = 0.001
    attack_epochs: int = 2
    constraint_mode: str = "feature_consistency"
    linf_bound: float = 0.1
    align_metric: str = "swd"
    slices: int = 128
    use_utility: bool = True
    use_enhance: bool = True
    use_consist: bool = True
    boost: float = 1.0
    pgd_radius: float = float("inf")
    attack_lr: float | None = None
    fixed_basis_seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("vanilla", "pgd", "spa"):
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if not 0.0 < self.poison_ratio <= 1.0:
            raise ConfigError(f"poison_ratio must be in (0,1], got {self.poison_ratio}")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ConfigError(f"unknown constraint_mode {self.constraint_mode!r}")
        if self.align_metric not in ALIGN_METRICS:
            raise ConfigError(f"unknown align_metric {self.align_metric!r}")
        if self.utility_weight < 0:
            raise ConfigError(f"utility_weight must be >= 0, got {self.utility_weight}")


def init_trigger(mode: str, input_dim: int, seed: int, blend_strength: float = 0.33, patch_size: int | None = None) -> TriggerSpec:
    """Random trigger: pattern uniform in [0,1], patch mask on leading coords."""
    rng = np.random.Generator(np.random.PCG64(seed))
    pattern = rng.uniform(0.0, 1.0, size=input_dim).astype(np.float32)
    mask = None
    if mode == "patch":
        size = patch_size if patch_size is not None else max(1, input_dim // 4)
        mask = np.zeros(input_dim, dtype=np.float32)
        mask[:size] = 1.0
    return TriggerSpec(mode=mode, pattern=pattern, blend_strength=blend_strength, mask=mask)


def apply_trigger(x: np.ndarray, trig: TriggerSpec) -> np.ndarray:
    """Stamp the trigger onto a batch (or single row); output stays in [0,1]."""
    x = np.asarray(x)
    if x.shape[-1] != trig.pattern.shape[0]:
        raise ValueError(f"input dim {x.shape[-1]} does not match trigger dim {trig.pattern.shape[0]}")
    if trig.mode == "patch":
        out = x * (1.0 - trig.mask) + trig.pattern * trig.mask
    elif trig.mode == "blend":
        beta = np.float32(trig.blend_strength)
        out = (1.0 - beta) * x + beta * trig.pattern
    else:
        out = x + trig.pattern
    return np.clip(out, 0.0, 1.0).astype(x.dtype, copy=False)


def _trigger_sensitivity(x: np.ndarray, trig: TriggerSpec) -> np.ndarray:
    """d(apply_trigger)/d(pattern), elementwise per sample."""
    if trig.mode == "patch":
        return np.broadcast_to(trig.mask, x.shape)
    if trig.mode == "blend":
        return np.full(x.shape, trig.blend_strength)
    raw = x + trig.pattern
    return ((raw > 0.0) & (raw < 1.0)).astype(np.float64)


def _clip_pattern(pattern: np.ndarray, trig: TriggerSpec, cfg: AttackConfig) -> np.ndarray:
    """Keep the pattern inside the constraint set and the output in [0,1]."""
    if cfg.constraint_mode == "linf":
        pattern = np.clip(pattern, -cfg.linf_bound, cfg.linf_bound)
    if trig.mode == "additive":
        return np.clip(pattern, -1.0, 1.0)
    return np.clip(pattern, 0.0, 1.0)


def poison_dataset(shard: Dataset, trig: TriggerSpec, target_label: int, ratio: float, seed: int) -> Dataset:
    """Trigger + relabel floor(ratio*n) uniformly chosen rows, order preserved."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0,1], got {ratio}")
    n = len(shard)
    count = int(ratio * n)
    inputs = shard.inputs.copy()
    labels = shard.labels.copy()
    if count > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        chosen = rng.choice(n, size=count, replace=False)
        inputs[chosen] = apply_trigger(inputs[chosen], trig)
        labels[chosen] = target_label
    return Dataset(inputs, labels, shard.class_count)


def _boosted(global_params: np.ndarray, trained: np.ndarray, boost: float) -> np.ndarray:
    if boost == 1.0:
        return trained
    return (global_params + np.float32(boost) * (trained - global_params)).astype(np.float32)


def vanilla_attack(
    spec: net.NetworkSpec,
    global_params: np.ndarray,
    shard: Dataset,
    trig: TriggerSpec,
    cfg: AttackConfig,
    lr: float,
    batch_size: int,
    seed: int,
) -> np.ndarray:
    """Classic label-supervised poisoning: train on a partially poisoned shard."""
    lr = cfg.attack_lr if cfg.attack_lr is not None else lr
    poisoned = poison_dataset(shard, trig, cfg.target_label, cfg.poison_ratio, seed)
    trained = net.sgd_train(spec, global_params, poisoned.inputs, poisoned.labels, cfg.attack_epochs, lr, batch_size, seed)
    return _boosted(global_params, trained, cfg.boost)


def pgd_attack(
    spec: net.NetworkSpec,
    global_params: np.ndarray,
    shard: Dataset,
    trig: TriggerSpec,
    cfg: AttackConfig,
    lr: float,
    batch_size: int,
    seed: int,
) -> np.ndarray:
    """Vanilla poisoning with per-epoch projection onto an L2 ball around the global model."""
    lr = cfg.attack_lr if cfg.attack_lr is not None else lr
    radius = cfg.pgd_radius
    if radius < 0:
        raise ConfigError(f"pgd radius must be >= 0, got {radius}")

    def project(params):
        if not np.isfinite(radius):
            return params
        delta = params - global_params
        norm = float(np.linalg.norm(delta))
        if norm <= radius:
            return params
        if radius == 0.0:
            return global_params.copy()
        return (global_params + delta * np.float32(radius / norm)).astype(np.float32)

    poisoned = poison_dataset(shard, trig, cfg.target_label, cfg.poison_ratio, seed)
    trained = net.sgd_train(
        spec, global_params, poisoned.inputs, poisoned.labels, cfg.attack_epochs, lr, batch_size, seed, post_epoch=project
    )
    return _boosted(global_params, project(trained), cfg.boost)


def _target_rows(shard: Dataset, target_label: int) -> np.ndarray:
    rows = np.flatnonzero(shard.labels == target_label)
    if rows.size == 0:
        raise ConfigError(
            f"attacker shard holds no samples of target class {target_label}; "
            "the experiment config must guarantee target samples"
        )
    return rows


def _draw_target_batch(rng: np.random.Generator, rows: np.ndarray, size: int) -> np.ndarray:
    replace = rows.size < size
    return rng.choice(rows, size=size, replace=replace)


def spa_enhance_trigger(
    spec: net.NetworkSpec,
    global_params: np.ndarray,
    shard: Dataset,
    trig0: TriggerSpec,
    cfg: AttackConfig,
    batch_size: int,
    seed: int,
) -> TriggerSpec:
    """Adversarial trigger search against the frozen global model.

    Each step pushes triggered inputs toward the target class via
    cross-entropy and, under the feature-consistency constraint, keeps
    triggered target-class embeddings directionally aligned with their
    clean embeddings through the projection distance. The global model
    is never modified.
    """
    target_rows = _target_rows(shard, cfg.target_label)
    if cfg.trigger_lr == 0 or cfg.enhance_steps == 0:
        return replace(trig0)
    rng = np.random.Generator(np.random.PCG64(seed))
    pattern = trig0.pattern.astype(np.float64)
    trig = replace(trig0)
    enhance_loss = net.TargetedCrossEntropy(target=cfg.target_label)
    use_consist = cfg.constraint_mode == "feature_consistency" and cfg.use_consist
    n = len(shard)
    for _ in range(cfg.enhance_steps):
        trig.pattern = pattern.astype(np.float32)
        batch_idx = rng.choice(n, size=min(batch_size, n), replace=False)
        x_a = shard.inputs[batch_idx]
        x_a_trig = apply_trigger(x_a, trig)
        gx = net.input_grads(spec, global_params, net.Batch(inputs=x_a_trig), enhance_loss)
        grad = (gx * _trigger_sensitivity(x_a, trig)).sum(axis=0)
        if use_consist:
            t_idx = _draw_target_batch(rng, target_rows, min(batch_size, n))
            x_t = shard.inputs[t_idx]
            x_t_trig = apply_trigger(x_t, trig)
            clean_emb = net.embed(spec, global_params, x_t)
            trig_emb = net.embed(spec, global_params, x_t_trig)
            demb = np.zeros_like(trig_emb, dtype=np.float64)
            for i in range(len(x_t)):
                _, _, g_ref = distances.proj_distance(clean_emb[i], trig_emb[i], grads=True)
                demb[i] = g_ref / len(x_t)
            gx_t = net.embedding_input_grads(spec, global_params, x_t_trig, demb.astype(np.float32))
            grad = grad + (gx_t * _trigger_sensitivity(x_t, trig)).sum(axis=0)
        pattern = _clip_pattern(pattern - cfg.trigger_lr * grad, trig0, cfg)
    trig.pattern = pattern.astype(np.float32)
    return trig


def _set_distance(metric, a, b, basis):
    if metric == "swd":
        return distances.sliced_wasserstein(a, b, basis, grads=True)
    return distances.alt_distance(metric, a, b, grads=True)


def spa_inject(
    spec: net.NetworkSpec,
    global_params: np.ndarray,
    shard: Dataset,
    trig: TriggerSpec,
    cfg: AttackConfig,
    lr: float,
    batch_size: int,
    seed: int,
) -> np.ndarray:
    """Feature-alignment training against a frozen teacher.

    Per batch: align the embedding population of triggered inputs with
    that of clean target-class inputs, and anchor clean embeddings to
    the frozen teacher's. Labels are never used; the classifier head
    receives exactly zero gradient and keeps its global values.
    """
    target_rows = _target_rows(shard, cfg.target_label)
    lr = cfg.attack_lr if cfg.attack_lr is not None else lr
    rng = np.random.Generator(np.random.PCG64(seed))
    student = global_params.copy()
    # teacher embeddings of the whole shard are frozen up front
    teacher_clean = None
    if cfg.use_utility and cfg.utility_weight > 0:
        teacher_clean = net.embed(spec, global_params, shard.inputs)
    n = len(shard)
    for epoch in range(cfg.attack_epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            x_a = shard.inputs[idx]
            t_idx = _draw_target_batch(rng, target_rows, len(idx))
            x_t = shard.inputs[t_idx]
            basis_seed = cfg.fixed_basis_seed
            if basis_seed is None:
                basis_seed = int(rng.integers(0, 2**31 - 1))
            basis = distances.sample_slices(spec.embedding_dim, cfg.slices, basis_seed)

            x_a_trig = apply_trigger(x_a, trig)
            emb_trig = net.embed(spec, student, x_a_trig)
            emb_tgt = net.embed(spec, student, x_t)
            align_val, d_trig, d_tgt = _set_distance(cfg.align_metric, emb_trig, emb_tgt, basis)
            total = align_val
            grads = net.embedding_param_grads(spec, student, x_a_trig, d_trig.astype(np.float32))
            grads += net.embedding_param_grads(spec, student, x_t, d_tgt.astype(np.float32))
            if teacher_clean is not None:
                emb_clean = net.embed(spec, student, x_a)
                util_val, d_clean, _ = _set_distance(cfg.align_metric, emb_clean, teacher_clean[idx], basis)
                total += cfg.utility_weight * util_val
                grads += cfg.utility_weight * net.embedding_param_grads(spec, student, x_a, d_clean.astype(np.float32))
            if not np.isfinite(total):
                raise NumericError(f"non-finite alignment loss at epoch {epoch}, batch at {start}")
            student = net.sgd_step(student, grads, lr)
    return student


def spa_attack(
    spec: net.NetworkSpec,
    global_params: np.ndarray,
    shard: Dataset,
    trig_state: TriggerSpec,
    cfg: AttackConfig,
    lr: float,
    batch_size: int,
    seed: int,
) -> tuple[np.ndarray, TriggerSpec]:
    """Trigger enhancement followed by alignment injection.

    Returns (local params, updated trigger); the trigger carries over
    between participations and is re-optimized from its previous value
    against the latest global model.
    """
    trig = trig_state
    if cfg.use_enhance and cfg.enhance_steps > 0:
        trig = spa_enhance_trigger(spec, global_params, shard, trig_state, cfg, batch_size, seed)
    params = spa_inject(spec, global_params, shard, trig, cfg, lr, batch_size, seed)
    return params, trig


def save_trigger(path, trig: TriggerSpec) -> None:
    pattern = np.ascontiguousarray(trig.pattern, dtype="<f4")
    payload = pattern.tobytes()
    if trig.mode == "patch":
        payload += np.ascontiguousarray(trig.mask, dtype="<f4").tobytes()
    header = f"{TRIGGER_MAGIC} v1 {trig.mode} {trig.blend_strength!r} {pattern.size}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def load_trigger(path) -> TriggerSpec:
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    tokens = header.decode("ascii", errors="replace").split()
    if len(tokens) != 5 or tokens[0] != TRIGGER_MAGIC or tokens[1] != "v1":
        raise DataFormatError(f"bad trigger header {header!r}")
    mode = tokens[2]
    if mode not in TRIGGER_MODES:
        raise DataFormatError(f"unknown trigger mode {mode!r}")
    beta = float(tokens[3])
    dim = int(tokens[4])
    expected = dim * (2 if mode == "patch" else 1)
    if len(blob) != 4 * expected:
        raise DataFormatError(f"trigger payload is {len(blob)} bytes, expected {4 * expected}")
    values = np.frombuffer(blob, dtype="<f4")
    pattern = values[:dim].copy()
    mask = values[dim:].copy() if mode == "patch" else None
    return TriggerSpec(mode=mode, pattern=pattern, blend_strength=beta, mask=mask)
