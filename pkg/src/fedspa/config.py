"""Experiment configuration: strict parsing, defaults, presets.

Configs are YAML trees. Parsing is strict: unknown keys, duplicate
keys, type mismatches and invariant violations all raise ConfigError
naming the offending dotted key. Every default is materialized into the
echoed config so a run is fully described by its echo plus nothing
else, and presets round-trip losslessly through the parser.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import yaml

from .attacks import ALIGN_METRICS, CONSTRAINT_MODES, TRIGGER_MODES, AttackConfig
from .defenses import DEFENSE_KINDS
from .errors import ConfigError

PARTICIPATION_MODES = ("random", "forced_window", "forced_burst")
AGGREGATION_MODES = ("sample_weighted", "uniform")


# ---------------------------------------------------------------------------
# typed views over the echoed tree


@dataclass
class DatasetCfg:
    kind: str
    classes: int
    per_class: int
    input_dim: int
    separation: float
    noise_sigma: float
    seed: int
    images: str | None
    labels: str | None
    test_images: str | None
    test_labels: str | None


@dataclass
class PartitionCfg:
    clients: int
    alpha: float
    seed: int


@dataclass
class NetworkCfg:
    hidden_dims: list[int]
    activation: str
    embedding_layer: int | None


@dataclass
class ScheduleCfg:
    rounds: int
    clients_per_round: int
    local_epochs: int
    lr: float
    batch_size: int
    eval_cadence: int
    aggregation: str
    workers: int


@dataclass
class TriggerCfg:
    mode: str
    blend_strength: float
    patch_size: int | None
    init_path: str | None


@dataclass
class AttackerCfg:
    client_id: int
    window: tuple[int, int]
    participation: str
    burst: tuple[int, int] | None
    attack: AttackConfig
    trigger: TriggerCfg


@dataclass
class DefenseCfg:
    kind: str
    num_malicious: int
    noise_scale: float
    clusters: int
    bound: float


@dataclass
class OutputCfg:
    dir: str | None
    checkpoint_rounds: list[int]
    projection: bool


@dataclass
class ExperimentConfig:
    master_seed: int
    dataset: DatasetCfg
    partition: PartitionCfg
    network: NetworkCfg
    schedule: ScheduleCfg
    attackers: list[AttackerCfg]
    defense: DefenseCfg
    output: OutputCfg
    echo: dict = field(repr=False, default_factory=dict)


# ---------------------------------------------------------------------------
# strict YAML loading


class _StrictLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in mapping:
            raise ConfigError(f"duplicate key {key!r} in config")
        mapping[key] = loader.construct_object(value_node, deep=True)
    return mapping


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(text: str) -> Any:
    return yaml.load(text, Loader=_StrictLoader)


# ---------------------------------------------------------------------------
# field validation helpers


def _err(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _check_keys(block: dict, allowed, path: str):
    if not isinstance(block, dict):
        _err(path, f"expected a mapping, got {type(block).__name__}")
    for key in block:
        if key not in allowed:
            _err(f"{path}.{key}", "unknown key")


def _as_int(value, path, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _err(path, f"expected integer, got {value!r}")
    if lo is not None and value < lo:
        _err(path, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        _err(path, f"must be <= {hi}, got {value}")
    return value


def _as_float(value, path, lo=None, lo_exclusive=False, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _err(path, f"expected number, got {value!r}")
    value = float(value)
    if math.isnan(value):
        _err(path, "must not be NaN")
    if lo is not None and (value < lo or (lo_exclusive and value == lo)):
        _err(path, f"must be {'>' if lo_exclusive else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        _err(path, f"must be <= {hi}, got {value}")
    return value


def _as_bool(value, path):
    if not isinstance(value, bool):
        _err(path, f"expected boolean, got {value!r}")
    return value


def _as_str(value, path, choices=None):
    if not isinstance(value, str):
        _err(path, f"expected string, got {value!r}")
    if choices is not None and value not in choices:
        _err(path, f"must be one of {list(choices)}, got {value!r}")
    return value


def _as_opt_str(value, path):
    if value is None:
        return None
    return _as_str(value, path)


def _as_opt_int(value, path, lo=None):
    if value is None:
        return None
    return _as_int(value, path, lo=lo)


def _as_int_list(value, path, lo=None):
    if not isinstance(value, list):
        _err(path, f"expected list of integers, got {value!r}")
    return [_as_int(v, f"{path}[{i}]", lo=lo) for i, v in enumerate(value)]


def _as_int_pair(value, path, lo=None):
    pair = _as_int_list(value, path, lo=lo)
    if len(pair) != 2:
        _err(path, f"expected exactly 2 integers, got {len(pair)}")
    return (pair[0], pair[1])


# ---------------------------------------------------------------------------
# block materializers: validate + fill defaults, returning echo dicts


def _dataset_block(raw: dict) -> dict:
    allowed = {
        "kind", "classes", "per_class", "input_dim", "separation", "noise_sigma",
        "seed", "images", "labels", "test_images", "test_labels",
    }
    _check_keys(raw, allowed, "dataset")
    kind = _as_str(raw.get("kind", "blobs"), "dataset.kind", choices=("blobs", "idx"))
    echo = {
        "kind": kind,
        "classes": _as_int(raw.get("classes", 8), "dataset.classes", lo=2),
        "per_class": _as_int(raw.get("per_class", 150), "dataset.per_class", lo=2),
        "input_dim": _as_int(raw.get("input_dim", 32), "dataset.input_dim", lo=1),
        "separation": _as_float(raw.get("separation", 3.0), "dataset.separation", lo=0.0),
        "noise_sigma": _as_float(raw.get("noise_sigma", 1.0), "dataset.noise_sigma", lo=0.0, lo_exclusive=True),
        "seed": _as_int(raw.get("seed", 0), "dataset.seed", lo=0),
        "images": _as_opt_str(raw.get("images"), "dataset.images"),
        "labels": _as_opt_str(raw.get("labels"), "dataset.labels"),
        "test_images": _as_opt_str(raw.get("test_images"), "dataset.test_images"),
        "test_labels": _as_opt_str(raw.get("test_labels"), "dataset.test_labels"),
    }
    if kind == "idx":
        for key in ("images", "labels", "test_images", "test_labels"):
            if echo[key] is None:
                _err(f"dataset.{key}", "required for kind=idx")
        n_tr = int(0.8 * echo["per_class"])
    else:
        for key in ("images", "labels", "test_images", "test_labels"):
            if echo[key] is not None:
                _err(f"dataset.{key}", "only valid for kind=idx")
        n_tr = int(0.8 * echo["per_class"])
        if n_tr < 1 or echo["per_class"] - n_tr < 1:
            _err("dataset.per_class", "too small for an 80/20 split")
    return echo


def _partition_block(raw: dict) -> dict:
    _check_keys(raw, {"clients", "alpha", "seed"}, "partition")
    return {
        "clients": _as_int(raw.get("clients", 20), "partition.clients", lo=2),
        "alpha": _as_float(raw.get("alpha", 1.0), "partition.alpha", lo=0.0, lo_exclusive=True),
        "seed": _as_int(raw.get("seed", 0), "partition.seed", lo=0),
    }


def _network_block(raw: dict) -> dict:
    _check_keys(raw, {"hidden_dims", "activation", "embedding_layer"}, "network")
    hidden = _as_int_list(raw.get("hidden_dims", [64]), "network.hidden_dims", lo=1)
    if not hidden:
        _err("network.hidden_dims", "must contain at least one layer")
    emb = _as_opt_int(raw.get("embedding_layer"), "network.embedding_layer", lo=0)
    if emb is not None and emb >= len(hidden):
        _err("network.embedding_layer", f"indexes layer {emb}, only {len(hidden)} hidden layers")
    return {
        "hidden_dims": hidden,
        "activation": _as_str(raw.get("activation", "relu"), "network.activation", choices=("relu",)),
        "embedding_layer": emb,
    }


def _schedule_block(raw: dict) -> dict:
    allowed = {"rounds", "clients_per_round", "local_epochs", "lr", "batch_size", "eval_cadence", "aggregation", "workers"}
    _check_keys(raw, allowed, "schedule")
    return {
        "rounds": _as_int(raw.get("rounds", 200), "schedule.rounds", lo=0),
        "clients_per_round": _as_int(raw.get("clients_per_round", 5), "schedule.clients_per_round", lo=1),
        "local_epochs": _as_int(raw.get("local_epochs", 2), "schedule.local_epochs", lo=0),
        "lr": _as_float(raw.get("lr", 0.05), "schedule.lr", lo=0.0),
        "batch_size": _as_int(raw.get("batch_size", 32), "schedule.batch_size", lo=1),
        "eval_cadence": _as_int(raw.get("eval_cadence", 5), "schedule.eval_cadence", lo=1),
        "aggregation": _as_str(raw.get("aggregation", "sample_weighted"), "schedule.aggregation", choices=AGGREGATION_MODES),
        "workers": _as_int(raw.get("workers", 1), "schedule.workers", lo=1),
    }


def _attack_block(raw: dict, path: str) -> dict:
    allowed = {
        "kind", "target_label", "poison_ratio", "utility_weight", "enhance_steps",
        "trigger_lr", "attack_epochs", "constraint_mode", "linf_bound", "align_metric",
        "slices", "use_utility", "use_enhance", "use_consist", "boost", "pgd_radius",
        "attack_lr",
    }
    _check_keys(raw, allowed, path)
    radius = raw.get("pgd_radius", float("inf"))
    if isinstance(radius, str) and radius.lower() in ("inf", ".inf", "infinity"):
        radius = float("inf")
    return {
        "kind": _as_str(raw.get("kind", "spa"), f"{path}.kind", choices=("vanilla", "pgd", "spa")),
        "target_label": _as_int(raw.get("target_label", 0), f"{path}.target_label", lo=0),
        "poison_ratio": _as_float(raw.get("poison_ratio", 0.5), f"{path}.poison_ratio", lo=0.0, lo_exclusive=True, hi=1.0),
        "utility_weight": _as_float(raw.get("utility_weight", 1.0), f"{path}.utility_weight", lo=0.0),
        "enhance_steps": _as_int(raw.get("enhance_steps", 200), f"{path}.enhance_steps", lo=0),
        "trigger_lr": _as_float(raw.get("trigger_lr", 0.001), f"{path}.trigger_lr", lo=0.0),
        "attack_epochs": _as_int(raw.get("attack_epochs", 2), f"{path}.attack_epochs", lo=0),
        "constraint_mode": _as_str(
            raw.get("constraint_mode", "feature_consistency"), f"{path}.constraint_mode", choices=CONSTRAINT_MODES
        ),
        "linf_bound": _as_float(raw.get("linf_bound", 0.1), f"{path}.linf_bound", lo=0.0, lo_exclusive=True),
        "align_metric": _as_str(raw.get("align_metric", "swd"), f"{path}.align_metric", choices=ALIGN_METRICS),
        "slices": _as_int(raw.get("slices", 128), f"{path}.slices", lo=1),
        "use_utility": _as_bool(raw.get("use_utility", True), f"{path}.use_utility"),
        "use_enhance": _as_bool(raw.get("use_enhance", True), f"{path}.use_enhance"),
        "use_consist": _as_bool(raw.get("use_consist", True), f"{path}.use_consist"),
        "boost": _as_float(raw.get("boost", 1.0), f"{path}.boost", lo=0.0),
        "pgd_radius": _as_float(radius, f"{path}.pgd_radius", lo=0.0),
        "attack_lr": None if raw.get("attack_lr") is None else _as_float(raw.get("attack_lr"), f"{path}.attack_lr", lo=0.0, lo_exclusive=True),
    }


def _trigger_block(raw: dict, path: str) -> dict:
    _check_keys(raw, {"mode", "blend_strength", "patch_size", "init_path"}, path)
    return {
        "mode": _as_str(raw.get("mode", "blend"), f"{path}.mode", choices=TRIGGER_MODES),
        "blend_strength": _as_float(raw.get("blend_strength", 0.33), f"{path}.blend_strength", lo=0.0, lo_exclusive=True, hi=1.0),
        "patch_size": _as_opt_int(raw.get("patch_size"), f"{path}.patch_size", lo=1),
        "init_path": _as_opt_str(raw.get("init_path"), f"{path}.init_path"),
    }


def _attacker_block(raw: dict, idx: int) -> dict:
    path = f"attackers[{idx}]"
    _check_keys(raw, {"client_id", "window", "participation", "burst", "attack", "trigger"}, path)
    if "client_id" not in raw:
        _err(f"{path}.client_id", "required")
    echo = {
        "client_id": _as_int(raw["client_id"], f"{path}.client_id", lo=0),
        "window": list(_as_int_pair(raw.get("window", [100, 130]), f"{path}.window", lo=0)),
        "participation": _as_str(
            raw.get("participation", "forced_window"), f"{path}.participation", choices=PARTICIPATION_MODES
        ),
        "burst": None if raw.get("burst") is None else list(_as_int_pair(raw["burst"], f"{path}.burst", lo=0)),
        "attack": _attack_block(raw.get("attack", {}) or {}, f"{path}.attack"),
        "trigger": _trigger_block(raw.get("trigger", {}) or {}, f"{path}.trigger"),
    }
    start, end = echo["window"]
    if start > end:
        _err(f"{path}.window", f"start {start} exceeds end {end}")
    if echo["participation"] == "forced_burst":
        if echo["burst"] is None:
            _err(f"{path}.burst", "required for participation=forced_burst")
        b_start, b_len = echo["burst"]
        if b_len < 1:
            _err(f"{path}.burst", "length must be >= 1")
        if b_start < start or b_start + b_len - 1 > end:
            _err(f"{path}.burst", "burst must lie inside the attack window")
    elif echo["burst"] is not None:
        _err(f"{path}.burst", "only valid for participation=forced_burst")
    return echo


def _defense_block(raw: dict) -> dict:
    _check_keys(raw, {"kind", "num_malicious", "noise_scale", "clusters", "bound"}, "defense")
    return {
        "kind": _as_str(raw.get("kind", "none"), "defense.kind", choices=DEFENSE_KINDS),
        "num_malicious": _as_int(raw.get("num_malicious", 1), "defense.num_malicious", lo=0),
        "noise_scale": _as_float(raw.get("noise_scale", 0.001), "defense.noise_scale", lo=0.0),
        "clusters": _as_int(raw.get("clusters", 2), "defense.clusters", lo=1),
        "bound": _as_float(raw.get("bound", 1.0), "defense.bound", lo=0.0, lo_exclusive=True),
    }


def _output_block(raw: dict) -> dict:
    _check_keys(raw, {"dir", "checkpoint_rounds", "projection"}, "output")
    return {
        "dir": _as_opt_str(raw.get("dir"), "output.dir"),
        "checkpoint_rounds": _as_int_list(raw.get("checkpoint_rounds", []), "output.checkpoint_rounds", lo=0),
        "projection": _as_bool(raw.get("projection", True), "output.projection"),
    }


def materialize(raw: Any) -> dict:
    """Validate a raw config tree and return the fully-defaulted echo."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    top = {"master_seed", "dataset", "partition", "network", "schedule", "attackers", "defense", "output"}
    _check_keys(raw, top, "config")
    attackers_raw = raw.get("attackers", []) or []
    if not isinstance(attackers_raw, list):
        _err("attackers", f"expected a list, got {type(attackers_raw).__name__}")
    echo = {
        "master_seed": _as_int(raw.get("master_seed", 0), "master_seed", lo=0),
        "dataset": _dataset_block(raw.get("dataset", {}) or {}),
        "partition": _partition_block(raw.get("partition", {}) or {}),
        "network": _network_block(raw.get("network", {}) or {}),
        "schedule": _schedule_block(raw.get("schedule", {}) or {}),
        "attackers": [_attacker_block(b or {}, i) for i, b in enumerate(attackers_raw)],
        "defense": _defense_block(raw.get("defense", {}) or {}),
        "output": _output_block(raw.get("output", {}) or {}),
    }
    _cross_validate(echo)
    return echo


def _cross_validate(echo: dict):
    clients = echo["partition"]["clients"]
    rounds = echo["schedule"]["rounds"]
    seen = set()
    forced = 0
    for i, a in enumerate(echo["attackers"]):
        path = f"attackers[{i}]"
        if a["client_id"] >= clients:
            _err(f"{path}.client_id", f"must be < partition.clients={clients}")
        if a["client_id"] in seen:
            _err(f"{path}.client_id", "duplicate attacker client id")
        seen.add(a["client_id"])
        if a["window"][1] > rounds:
            _err(f"{path}.window", f"window end {a['window'][1]} exceeds schedule.rounds={rounds}")
        if echo["dataset"]["kind"] == "blobs" and a["attack"]["target_label"] >= echo["dataset"]["classes"]:
            _err(f"{path}.attack.target_label", f"must be < dataset.classes={echo['dataset']['classes']}")
        if a["participation"] != "random":
            forced += 1
    if forced > echo["schedule"]["clients_per_round"]:
        _err("attackers", f"{forced} forced attackers exceed clients_per_round={echo['schedule']['clients_per_round']}")


def build(echo: dict) -> ExperimentConfig:
    """Typed view over an echo tree produced by materialize()."""
    d, p, n, s = echo["dataset"], echo["partition"], echo["network"], echo["schedule"]
    attackers = []
    for a in echo["attackers"]:
        attack = AttackConfig(**a["attack"])
        trig = TriggerCfg(**a["trigger"])
        attackers.append(
            AttackerCfg(
                client_id=a["client_id"],
                window=tuple(a["window"]),
                participation=a["participation"],
                burst=None if a["burst"] is None else tuple(a["burst"]),
                attack=attack,
                trigger=trig,
            )
        )
    return ExperimentConfig(
        master_seed=echo["master_seed"],
        dataset=DatasetCfg(**d),
        partition=PartitionCfg(**p),
        network=NetworkCfg(**n),
        schedule=ScheduleCfg(**s),
        attackers=attackers,
        defense=DefenseCfg(**echo["defense"]),
        output=OutputCfg(**echo["output"]),
        echo=echo,
    )


def parse_raw(raw: Any) -> ExperimentConfig:
    return build(materialize(raw))


def parse_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = load_yaml(fh.read())
    return parse_raw(raw)


def apply_overrides(raw: Any, overrides: list[str]) -> Any:
    """Apply dotted-path key=value overrides to a raw config tree.

    List elements are addressed by numeric segments, e.g.
    attackers.0.attack.kind=vanilla. Values parse as YAML scalars.
    """
    if raw is None:
        raw = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, _, value_text = item.partition("=")
        segments = key.strip().split(".")
        value = load_yaml(value_text)
        node = raw
        for i, seg in enumerate(segments[:-1]):
            nxt = segments[i + 1]
            if seg.isdigit():
                if not isinstance(node, list) or int(seg) >= len(node):
                    raise ConfigError(f"override {key!r}: no list element {seg}")
                node = node[int(seg)]
            else:
                if not isinstance(node, dict):
                    raise ConfigError(f"override {key!r}: {seg} is not a mapping")
                if seg not in node or node[seg] is None:
                    node[seg] = [] if nxt.isdigit() else {}
                node = node[seg]
        last = segments[-1]
        if last.isdigit():
            if not isinstance(node, list):
                raise ConfigError(f"override {key!r}: parent is not a list")
            idx = int(last)
            if idx == len(node):
                node.append(value)
            elif idx < len(node):
                node[idx] = value
            else:
                raise ConfigError(f"override {key!r}: index {idx} out of range")
        else:
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: parent is not a mapping")
            node[last] = value
    return raw


# ---------------------------------------------------------------------------
# presets: desk-scale config families mirroring the experiment grids

PRESET_NAMES = (
    "table1_point",
    "alpha_sweep",
    "persistence",
    "multi_label",
    "lambda_sweep",
    "norm_ablation",
    "component_ablation",
    "trigger_constraint",
)

_SWEEP_SEEDS = (0, 1, 2)


def _desk_raw(master_seed: int, **extra) -> dict:
    raw = {
        "master_seed": master_seed,
        "dataset": {"kind": "blobs", "classes": 8, "per_class": 150, "input_dim": 32, "separation": 3.0, "noise_sigma": 1.0, "seed": master_seed},
        "partition": {"clients": 20, "alpha": 1.0, "seed": master_seed},
        "network": {"hidden_dims": [64]},
        "schedule": {"rounds": 200, "clients_per_round": 5, "local_epochs": 2, "lr": 0.05, "batch_size": 32, "eval_cadence": 5},
        "attackers": [],
        "defense": {"kind": "none"},
    }
    return apply_overrides(raw, [f"{k}={v}" for k, v in extra.items()])


def _desk_attacker(kind: str, client_id: int = 0, target_label: int = 0, window=(100, 130)) -> dict:
    return {
        "client_id": client_id,
        "window": list(window),
        "participation": "forced_window",
        "attack": {"kind": kind, "target_label": target_label},
        "trigger": {"mode": "blend", "blend_strength": 0.33},
    }


def preset(name: str, seeds=_SWEEP_SEEDS) -> list[dict]:
    """Raw config family for one experiment grid (one entry per cell x seed)."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {list(PRESET_NAMES)}")
    out = []
    if name == "table1_point":
        for seed in seeds:
            for attack_kind in ("vanilla", "spa"):
                for defense in ("none", "multikrum"):
                    raw = _desk_raw(seed)
                    raw["attackers"] = [_desk_attacker(attack_kind)]
                    raw["defense"] = {"kind": defense, "num_malicious": 1}
                    out.append(raw)
    elif name == "alpha_sweep":
        for alpha in (0.5, 1, 5, 10, 1000):
            for seed in seeds:
                raw = _desk_raw(seed)
                raw["partition"]["alpha"] = float(alpha)
                raw["attackers"] = [_desk_attacker("spa")]
                out.append(raw)
    elif name == "persistence":
        for seed in seeds:
            for attack_kind in ("vanilla", "spa"):
                raw = _desk_raw(seed)
                raw["schedule"]["rounds"] = 230
                raw["attackers"] = [_desk_attacker(attack_kind)]
                out.append(raw)
    elif name == "multi_label":
        for seed in seeds:
            for attack_kind in ("vanilla", "spa"):
                raw = _desk_raw(seed)
                raw["attackers"] = [
                    _desk_attacker(attack_kind, client_id=cid, target_label=label)
                    for cid, label in ((0, 0), (1, 1), (2, 2))
                ]
                out.append(raw)
    elif name == "lambda_sweep":
        for weight in (0, 0.3, 0.6, 1, 6, 10):
            for seed in seeds:
                raw = _desk_raw(seed)
                attacker = _desk_attacker("spa")
                attacker["attack"]["utility_weight"] = float(weight)
                if weight == 0:
                    attacker["attack"]["use_utility"] = False
                raw["attackers"] = [attacker]
                out.append(raw)
    elif name == "norm_ablation":
        for metric in ("l2", "kl", "cosine", "swd"):
            for seed in seeds:
                raw = _desk_raw(seed)
                attacker = _desk_attacker("spa")
                attacker["attack"]["align_metric"] = metric
                raw["attackers"] = [attacker]
                out.append(raw)
    elif name == "component_ablation":
        variants = (
            {"use_utility": False, "use_enhance": False, "use_consist": False},
            {"use_utility": False, "use_enhance": True, "use_consist": False},
            {"use_utility": False, "use_enhance": True, "use_consist": True},
            {"use_utility": True, "use_enhance": False, "use_consist": False},
            {"use_utility": True, "use_enhance": True, "use_consist": False},
            {"use_utility": True, "use_enhance": True, "use_consist": True},
        )
        for toggles in variants:
            for seed in seeds:
                raw = _desk_raw(seed)
                attacker = _desk_attacker("spa")
                attacker["attack"].update(toggles)
                raw["attackers"] = [attacker]
                out.append(raw)
    elif name == "trigger_constraint":
        for mode in ("feature_consistency", "linf"):
            for seed in seeds:
                raw = _desk_raw(seed)
                attacker = _desk_attacker("spa")
                attacker["attack"]["constraint_mode"] = mode
                raw["attackers"] = [attacker]
                out.append(raw)
    return out


def dump_yaml(echo: dict) -> str:
    return yaml.safe_dump(echo, sort_keys=False, default_flow_style=None)
