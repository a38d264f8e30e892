"""FedAvg orchestration: selection, local training, defenses, round loop.

Determinism contract: the full experiment output is a pure function of
the config (master seed included). Every random choice draws from a
named substream keyed by (master_seed, round, client, purpose), so
client work can run on any number of workers without changing a byte of
output; aggregation always consumes updates in client-id order.
"""

from __future__ import annotations

import concurrent.futures
import json
from dataclasses import dataclass, field

import numpy as np

from . import attacks, data, defenses, metrics, net, rng
from .config import AttackerCfg, ExperimentConfig
from .errors import ConfigError, NumericError


@dataclass
class ClientUpdate:
    """Full local model (not a delta) plus the shard size behind it."""

    client_id: int
    params: np.ndarray
    sample_count: int


@dataclass
class RoundRecord:
    round: int
    acc: float | None
    asr: float | None
    selected_ids: list[int]
    excluded_ids: list[int]
    global_norm: float
    defense: str
    attack_ids: list[int]
    asr_per_attacker: dict[int, float] = field(default_factory=dict)

    def to_csv_row(self) -> str:
        def num(v):
            return "" if v is None else f"{v:.6f}"

        def ids(v):
            return "|".join(str(i) for i in v)

        return ",".join(
            [
                str(self.round),
                num(self.acc),
                num(self.asr),
                ids(self.selected_ids),
                ids(self.excluded_ids),
                f"{self.global_norm:.6f}",
                self.defense,
                ids(self.attack_ids),
            ]
        )


CSV_HEADER = "round,acc,asr,selected_ids,excluded_ids,global_norm,defense,attack"


def select_clients(n_clients: int, m: int, round_idx: int, selection_seed: int) -> list[int]:
    """Uniform sample without replacement, sorted, deterministic per (round, seed)."""
    if not 0 < m <= n_clients:
        raise ConfigError(f"cannot select {m} of {n_clients} clients")
    gen = rng.substream(selection_seed, round_idx, rng.SELECTION)
    return sorted(gen.choice(n_clients, size=m, replace=False).tolist())


def local_train(
    spec: net.NetworkSpec,
    global_params: np.ndarray,
    shard: data.Dataset,
    epochs: int,
    lr: float,
    batch_size: int,
    client_seed: int,
    client_id: int = 0,
) -> ClientUpdate:
    """Benign client step: epochs of mini-batch SGD on cross-entropy."""
    if len(shard) == 0:
        raise ConfigError(f"client {client_id} has an empty shard")
    params = net.sgd_train(spec, global_params, shard.inputs, shard.labels, epochs, lr, batch_size, client_seed)
    return ClientUpdate(client_id=client_id, params=params, sample_count=len(shard))


def aggregate(updates: list[ClientUpdate], mode: str = "sample_weighted", weights: dict[int, float] | None = None) -> np.ndarray:
    """Weighted mean of full local models, summed in client-id order.

    Computed as base + sum(w_k * (p_k - base)) so aggregating N copies
    of one model returns it bit-exactly.
    """
    if not updates:
        raise ValueError("no updates to aggregate")
    ordered = sorted(updates, key=lambda u: u.client_id)
    if weights is not None:
        lam = np.array([weights[u.client_id] for u in ordered], dtype=np.float64)
    elif mode == "sample_weighted":
        lam = np.array([u.sample_count for u in ordered], dtype=np.float64)
    elif mode == "uniform":
        lam = np.ones(len(ordered))
    else:
        raise ConfigError(f"unknown aggregation mode {mode!r}")
    lam = lam / lam.sum()
    base = ordered[0].params
    acc = np.zeros(base.shape, dtype=np.float64)
    for weight, update in zip(lam, ordered):
        acc += weight * (update.params.astype(np.float64) - base)
    return (base + acc).astype(np.float32)


def _build_dataset(cfg) -> tuple[data.Dataset, data.Dataset]:
    if cfg.kind == "blobs":
        return data.gen_blobs(cfg.classes, cfg.per_class, cfg.input_dim, cfg.separation, cfg.noise_sigma, cfg.seed)
    train = data.load_idx(cfg.images, cfg.labels)
    test = data.load_idx(cfg.test_images, cfg.test_labels, num_classes=train.class_count)
    return train, test


@dataclass
class _AttackerState:
    cfg: AttackerCfg
    trigger: attacks.TriggerSpec


class Experiment:
    """One simulated run. State mutates only between rounds, in the coordinator."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.train, self.test = _build_dataset(config.dataset)
        sched = config.schedule
        if sched.clients_per_round > config.partition.clients:
            raise ConfigError("schedule.clients_per_round exceeds partition.clients")
        self.spec = net.NetworkSpec(
            input_dim=self.train.input_dim,
            hidden_dims=list(config.network.hidden_dims),
            num_classes=self.train.class_count,
            activation=config.network.activation,
            embedding_layer=config.network.embedding_layer,
        )
        plan = data.dirichlet_partition(
            self.train.labels, config.partition.clients, config.partition.alpha, config.partition.seed
        )
        self.shards = {cid: self.train.subset(idx) for cid, idx in enumerate(plan.assignments)}
        self.global_params = net.init_params(self.spec, rng.subseed(config.master_seed, rng.INIT))
        self.histories: dict[int, np.ndarray] = {}
        self.attackers: dict[int, _AttackerState] = {}
        for a in config.attackers:
            if a.attack.target_label >= self.train.class_count:
                raise ConfigError(f"attacker {a.client_id} targets class {a.attack.target_label}, dataset has {self.train.class_count}")
            if a.trigger.init_path is not None:
                trig = attacks.load_trigger(a.trigger.init_path)
                if trig.pattern.size != self.train.input_dim:
                    raise ConfigError(f"trigger file dim {trig.pattern.size} does not match input dim {self.train.input_dim}")
            else:
                trig = attacks.init_trigger(
                    a.trigger.mode,
                    self.train.input_dim,
                    rng.subseed(config.master_seed, rng.ATTACK, a.client_id),
                    blend_strength=a.trigger.blend_strength,
                    patch_size=a.trigger.patch_size,
                )
            self.attackers[a.client_id] = _AttackerState(cfg=a, trigger=trig)
        self.round = 0
        self.records: list[RoundRecord] = []
        self.checkpoints: dict[int, np.ndarray] = {}

    # -- participation -----------------------------------------------------

    def _in_window(self, a: AttackerCfg, t: int) -> bool:
        return a.window[0] <= t <= a.window[1]

    def _forced(self, a: AttackerCfg, t: int) -> bool:
        if a.participation == "forced_window":
            return self._in_window(a, t)
        if a.participation == "forced_burst":
            start, length = a.burst
            return start <= t <= start + length - 1
        return False

    def _attacks_now(self, a: AttackerCfg, t: int, naturally_selected: bool) -> bool:
        if not self._in_window(a, t):
            return False
        if a.participation == "random":
            return naturally_selected
        return self._forced(a, t)

    def _participants(self, t: int) -> tuple[list[int], set[int]]:
        sched = self.config.schedule
        selected = select_clients(self.config.partition.clients, sched.clients_per_round, t, self.config.master_seed)
        natural = set(selected)
        due = sorted(cid for cid, st in self.attackers.items() if self._forced(st.cfg, t))
        missing = [cid for cid in due if cid not in natural]
        if missing:
            slots = [i for i, cid in enumerate(selected) if cid not in due]
            if len(missing) > len(slots):
                raise ConfigError(f"round {t}: {len(due)} forced attackers exceed selectable slots")
            for slot, cid in zip(slots, missing):
                selected[slot] = cid
        return sorted(selected), natural

    # -- client execution ----------------------------------------------------

    def _client_task(self, cid: int, attacking: bool, t: int):
        sched = self.config.schedule
        shard = self.shards[cid]
        try:
            if not attacking:
                update = local_train(
                    self.spec,
                    self.global_params,
                    shard,
                    sched.local_epochs,
                    sched.lr,
                    sched.batch_size,
                    rng.subseed(self.config.master_seed, t, cid, rng.CLIENT),
                    client_id=cid,
                )
                return update, None
            state = self.attackers[cid]
            seed = rng.subseed(self.config.master_seed, t, cid, rng.ATTACK)
            kind = state.cfg.attack.kind
            if kind == "vanilla":
                params = attacks.vanilla_attack(
                    self.spec, self.global_params, shard, state.trigger, state.cfg.attack, sched.lr, sched.batch_size, seed
                )
                new_trigger = None
            elif kind == "pgd":
                params = attacks.pgd_attack(
                    self.spec, self.global_params, shard, state.trigger, state.cfg.attack, sched.lr, sched.batch_size, seed
                )
                new_trigger = None
            else:
                params, new_trigger = attacks.spa_attack(
                    self.spec, self.global_params, shard, state.trigger, state.cfg.attack, sched.lr, sched.batch_size, seed
                )
            return ClientUpdate(client_id=cid, params=params, sample_count=len(shard)), new_trigger
        except NumericError as exc:
            raise NumericError(f"round {t}, client {cid}: {exc}") from exc

    def _execute(self, tasks: list[tuple[int, bool]], t: int) -> dict[int, tuple[ClientUpdate, object]]:
        workers = self.config.schedule.workers
        if workers > 1 and len(tasks) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {cid: pool.submit(self._client_task, cid, attacking, t) for cid, attacking in tasks}
                return {cid: fut.result() for cid, fut in futures.items()}
        return {cid: self._client_task(cid, attacking, t) for cid, attacking in tasks}

    # -- defense -------------------------------------------------------------

    def _apply_defense(self, updates: list[ClientUpdate], t: int):
        cfg = self.config.defense
        mode = self.config.schedule.aggregation
        kind = cfg.kind
        if kind == "none":
            kept = updates
            decision = defenses.DefenseDecision(
                kept_ids=[u.client_id for u in updates], excluded_ids=[], weights=self._mode_weights(updates)
            )
            return kept, None, None, decision
        if kind == "norm_clip":
            clipped = defenses.clip_updates(updates, self.global_params, cfg.bound)
            decision = defenses.DefenseDecision(
                kept_ids=[u.client_id for u in clipped], excluded_ids=[], weights=self._mode_weights(clipped)
            )
            return clipped, None, None, decision
        if kind == "multikrum":
            decision = defenses.multikrum(updates, self.global_params, cfg.num_malicious)
            kept = [u for u in updates if u.client_id in decision.kept_ids]
            return kept, decision.weights, None, decision
        if kind == "foolsgold":
            histories = [(u.client_id, self.histories[u.client_id]) for u in sorted(updates, key=lambda u: u.client_id)]
            decision = defenses.foolsgold(histories)
            return list(updates), decision.weights, None, decision
        if kind == "flame":
            aggregated, decision = defenses.flame_lite(
                updates, self.global_params, cfg.noise_scale, rng.subseed(self.config.master_seed, t, rng.DEFENSE_NOISE)
            )
            return [], None, aggregated, decision
        if kind == "rflbat":
            decision = defenses.rflbat_lite(
                updates, self.global_params, cfg.clusters, rng.subseed(self.config.master_seed, t, rng.DEFENSE_NOISE)
            )
            kept = [u for u in updates if u.client_id in decision.kept_ids]
            return kept, decision.weights, None, decision
        raise ConfigError(f"unknown defense kind {kind!r}")

    def _mode_weights(self, updates: list[ClientUpdate]) -> dict[int, float]:
        if self.config.schedule.aggregation == "uniform":
            return {u.client_id: 1.0 / len(updates) for u in updates}
        total = sum(u.sample_count for u in updates)
        return {u.client_id: u.sample_count / total for u in updates}

    # -- evaluation ----------------------------------------------------------

    def _eval_due(self, t: int) -> bool:
        sched = self.config.schedule
        return (t + 1) % sched.eval_cadence == 0 or t == sched.rounds - 1

    def evaluate(self) -> tuple[float, np.ndarray, dict[int, float]]:
        acc, confusion = metrics.accuracy(self.spec, self.global_params, self.test)
        per_attacker = {}
        for cid, state in sorted(self.attackers.items()):
            per_attacker[cid] = metrics.asr(self.spec, self.global_params, self.test, state.trigger, state.cfg.attack.target_label)
        return acc, confusion, per_attacker

    # -- round loop ----------------------------------------------------------

    def run_round(self) -> RoundRecord:
        t = self.round
        participants, natural = self._participants(t)
        tasks = []
        attack_ids = []
        for cid in participants:
            state = self.attackers.get(cid)
            attacking = state is not None and self._attacks_now(state.cfg, t, cid in natural)
            if attacking:
                attack_ids.append(cid)
            tasks.append((cid, attacking))
        results = self._execute(tasks, t)
        updates = [results[cid][0] for cid in participants]

        for u in updates:
            delta = (u.params - self.global_params).astype(np.float32)
            if u.client_id in self.histories:
                self.histories[u.client_id] = self.histories[u.client_id] + delta
            else:
                self.histories[u.client_id] = delta

        kept, weights, aggregated, decision = self._apply_defense(updates, t)
        if aggregated is None:
            if kept:
                aggregated = aggregate(kept, self.config.schedule.aggregation, weights)
            else:
                aggregated = self.global_params
                decision.notes = (decision.notes + "; " if decision.notes else "") + "all updates excluded, carrying over"
        self.global_params = aggregated
        for cid in attack_ids:
            new_trigger = results[cid][1]
            if new_trigger is not None:
                self.attackers[cid].trigger = new_trigger

        acc = asr_mean = None
        per_attacker: dict[int, float] = {}
        if self._eval_due(t):
            acc, _, per_attacker = self.evaluate()
            if per_attacker:
                asr_mean = float(np.mean(list(per_attacker.values())))
        record = RoundRecord(
            round=t,
            acc=acc,
            asr=asr_mean,
            selected_ids=participants,
            excluded_ids=decision.excluded_ids,
            global_norm=float(np.linalg.norm(self.global_params)),
            defense=self.config.defense.kind,
            attack_ids=attack_ids,
            asr_per_attacker=per_attacker,
        )
        self.records.append(record)
        if t in self.config.output.checkpoint_rounds:
            self.checkpoints[t] = self.global_params.copy()
        self.round += 1
        return record


@dataclass
class ExperimentReport:
    echo: dict
    records: list[RoundRecord]
    initial: dict
    final: dict
    final_params: np.ndarray
    triggers: dict[int, attacks.TriggerSpec]
    confusion: np.ndarray
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)

    def persistence(self, client_id: int):
        window_end = dict_window_end(self.echo, client_id)
        view = [
            RoundRecord(
                round=r.round,
                acc=r.acc,
                asr=r.asr_per_attacker.get(client_id),
                selected_ids=[],
                excluded_ids=[],
                global_norm=0.0,
                defense="",
                attack_ids=[],
            )
            for r in self.records
        ]
        return metrics.persistence_curve(view, window_end)


def dict_window_end(echo: dict, client_id: int) -> int:
    for a in echo["attackers"]:
        if a["client_id"] == client_id:
            return a["window"][1]
    raise KeyError(f"no attacker with client id {client_id}")


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run all rounds and compile the report; pure function of the config."""
    exp = Experiment(config)
    init_acc, _, init_asr = exp.evaluate()
    initial = {
        "acc": init_acc,
        "asr_per_attacker": {str(k): v for k, v in init_asr.items()},
    }
    rounds = config.schedule.rounds
    for _ in range(rounds):
        exp.run_round()
    final_acc, confusion, final_asr = exp.evaluate()
    final = {
        "acc": final_acc,
        "asr_mean": float(np.mean(list(final_asr.values()))) if final_asr else None,
        "asr_per_attacker": {str(k): v for k, v in final_asr.items()},
        "global_norm": float(np.linalg.norm(exp.global_params)),
    }
    report = ExperimentReport(
        echo=config.echo,
        records=exp.records,
        initial=initial,
        final=final,
        final_params=exp.global_params,
        triggers={cid: st.trigger for cid, st in exp.attackers.items()},
        confusion=confusion,
        checkpoints=exp.checkpoints,
    )
    persistence = {}
    for cid in sorted(exp.attackers):
        curve = report.persistence(cid)
        if curve.series:
            persistence[str(cid)] = {
                "peak": curve.peak,
                "half_life": None if curve.half_life is None or np.isinf(curve.half_life) else curve.half_life,
                "final": curve.series[-1][1],
            }
    final["persistence"] = persistence
    return report


# -- artifact writers ----------------------------------------------------


def write_rounds_csv(path, records: list[RoundRecord]) -> None:
    lines = [CSV_HEADER] + [r.to_csv_row() for r in records]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def report_to_json_dict(report: ExperimentReport) -> dict:
    return {
        "config": report.echo,
        "initial": report.initial,
        "final": report.final,
        "confusion": report.confusion.tolist(),
        "rounds": [
            {
                "round": r.round,
                "acc": r.acc,
                "asr": r.asr,
                "selected_ids": r.selected_ids,
                "excluded_ids": r.excluded_ids,
                "global_norm": r.global_norm,
                "defense": r.defense,
                "attack_ids": r.attack_ids,
                "asr_per_attacker": {str(k): v for k, v in r.asr_per_attacker.items()},
            }
            for r in report.records
        ],
    }


def _projection_rows(report: ExperimentReport, config: ExperimentConfig, test: data.Dataset):
    inputs = [test.inputs]
    labels = [test.labels]
    poisoned = [np.zeros(len(test), dtype=np.int64)]
    for cid, trig in sorted(report.triggers.items()):
        target = next(a.attack.target_label for a in config.attackers if a.client_id == cid)
        mask = test.labels != target
        inputs.append(attacks.apply_trigger(test.inputs[mask], trig))
        labels.append(test.labels[mask])
        poisoned.append(np.ones(int(mask.sum()), dtype=np.int64))
    return np.concatenate(inputs), np.concatenate(labels), np.concatenate(poisoned)


def write_artifacts(report: ExperimentReport, config: ExperimentConfig, out_dir) -> None:
    """Write rounds CSV, report JSON, projection CSV, checkpoints, triggers."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rounds_csv(out / "rounds.csv", report.records)
    payload = json.dumps(report_to_json_dict(report), indent=2, allow_nan=False)
    (out / "report.json").write_text(payload + "\n", encoding="utf-8")
    net.save_params(out / "final_params.bin", report.final_params)
    for t in sorted(report.checkpoints):
        net.save_params(out / f"checkpoint_round{t:04d}.bin", report.checkpoints[t])
    for cid, trig in sorted(report.triggers.items()):
        attacks.save_trigger(out / f"trigger_client{cid}.bin", trig)
    if config.output.projection:
        train, test = _build_dataset(config.dataset)
        spec = net.NetworkSpec(
            input_dim=train.input_dim,
            hidden_dims=list(config.network.hidden_dims),
            num_classes=train.class_count,
            activation=config.network.activation,
            embedding_layer=config.network.embedding_layer,
        )
        inputs, labels, poisoned = _projection_rows(report, config, test)
        coords, _ = metrics.feature_projection(spec, report.final_params, inputs, labels)
        lines = ["sample_id,label,poisoned,pc1,pc2"]
        for i in range(len(labels)):
            lines.append(f"{i},{labels[i]},{poisoned[i]},{coords[i, 0]:.6f},{coords[i, 1]:.6f}")
        (out / "projection.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
