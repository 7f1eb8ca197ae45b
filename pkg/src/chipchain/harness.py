"""Experiment runners, the brute-force reputation oracle, and CSV export.

Three experiment families are covered:

  basic       one manufacturer sells one unit-price part per transaction with
              immediate verification, swept over decrease rates and defect
              probabilities. The default backend folds the recurrence in
              closed form between defect events (reputation grows linearly
              while nothing fails), which keeps million-transaction curves in
              the millisecond range; a ledger backend drives the same scenario
              through the full machinery and must agree.
  end_to_end  full pipeline: build a population, generate a stream, replay it
              against a ledger with a reputation engine attached, and
              aggregate reputation by consortium and role.
  attack      benign, malicious, and sleeper behaviors for a single seller,
              sharing one underlying uniform draw per seed so a sleeper's
              trajectory is exactly the benign one until its switch point.

The oracle recomputes every entity's (r, r_ideal) from scratch by walking a
serialized operation log and re-deriving each completed lifecycle's path and
its reward or penalty directly. It shares no state with the incremental
engine, so agreement within 1e-9 relative is the correctness check for the
whole reputation pipeline.

All CSV output is deterministic: a comment line recording the experiment
parameters and seed, a header row, then fixed-point values with six decimals.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import Entity, EntityId, Money, Role
from .errors import InvalidConfig
from .ledger import Ledger, PenaltyTrace
from .reputation import (
    ObserverView,
    ReputationEngine,
    ReputationParams,
    normalized_score,
)
from .simulator import (
    BehaviorProfile,
    ReplayResult,
    SimConfig,
    Topology,
    assign_behaviors,
    build_topology,
    generate_stream,
    replay,
)

#: Roles whose members actually sell parts; consortium aggregates cover these.
SELLING_ROLES = (
    Role.CHIPLET_MANUFACTURER,
    Role.CHIPLET_DISTRIBUTOR,
    Role.IC_MANUFACTURER,
    Role.IC_DISTRIBUTOR,
)

DEFAULT_STRIDE = 1000

#: Default grid for the basic sweep.
BASIC_M_VALUES = (0.001, 0.01)
BASIC_DEFECT_PROBS = (1e-5, 1e-4, 1e-3, 1e-2)

#: Default decrease rate for single-seller attack curves.
ATTACK_DECREASE_RATE = 0.01

#: Default defect probabilities for the end-to-end scenario: members of
#: untrusted consortiums ship defects at an elevated rate.
TRUSTED_DEFECT_PROB = 0.001
UNTRUSTED_DEFECT_PROB = 0.005


# ---------------------------------------------------------------------------
# Experiment specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated experiment request: kind, parameter grid, output directory."""

    kind: str
    n_txn: int = 1_000_000
    seeds: tuple[int, ...] = (0,)
    out_dir: str | None = None
    m_values: tuple[float, ...] = BASIC_M_VALUES
    defect_probs: tuple[float, ...] = BASIC_DEFECT_PROBS
    benign_p: float = 0.001
    malicious_ps: tuple[float, ...] = (0.0015, 0.002)
    switch_at: int = 500_000
    sim: SimConfig | None = None

    def validate(self) -> None:
        if self.kind not in ("basic", "end_to_end", "attack"):
            raise InvalidConfig(f"unknown experiment kind {self.kind!r}")
        if self.n_txn < 1:
            raise InvalidConfig("n_txn must be >= 1")
        if not self.seeds:
            raise InvalidConfig("at least one seed is required")
        if self.kind == "basic" and (not self.m_values or not self.defect_probs):
            raise InvalidConfig("basic sweep needs a non-empty (m, defect_prob) grid")
        if self.kind == "attack":
            if not self.malicious_ps:
                raise InvalidConfig("attack run needs at least one malicious level")
            if not 0 <= self.switch_at < self.n_txn:
                raise InvalidConfig("switch_at must lie before the end of the stream")
        if self.kind == "end_to_end" and self.sim is not None:
            self.sim.validate()


# ---------------------------------------------------------------------------
# Single-seller curves (basic and attack experiments)
# ---------------------------------------------------------------------------


@dataclass
class Series:
    """One sampled reputation trajectory."""

    label: str
    txn_index: np.ndarray
    r: np.ndarray
    normalized: np.ndarray
    meta: dict = field(default_factory=dict)

    def final_normalized(self) -> float:
        return float(self.normalized[-1])


def uniform_draws(n: int, seed: int) -> np.ndarray:
    """The shared uniform stream behind every behavior at one seed."""
    return np.random.Generator(np.random.PCG64(seed)).random(n)


def defect_mask(n: int, p: float, seed: int) -> np.ndarray:
    return uniform_draws(n, seed) < p


def switching_mask(
    n: int, p_before: float, p_after: float, switch_at: int, seed: int
) -> np.ndarray:
    u = uniform_draws(n, seed)
    thresholds = np.where(np.arange(n) < switch_at, p_before, p_after)
    return u < thresholds


def _sample_positions(n: int, stride: int) -> np.ndarray:
    positions = np.arange(stride, n + 1, stride, dtype=np.int64)
    if len(positions) == 0 or positions[-1] != n:
        positions = np.append(positions, n)
    return positions


def fold_single_seller(
    mask: np.ndarray,
    decrease_rate: float,
    stride: int = DEFAULT_STRIDE,
    penalty_form: str = "rate",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sampled (txn_index, r, normalized) for one seller, folded in closed form.

    Per transaction the seller either gains 1 (pass) or has r divided by the
    penalty divisor (fail); the ideal reputation is the transaction index.
    Between failures r grows linearly, so only failure and sample positions
    need visiting.
    """
    n = len(mask)
    divisor = decrease_rate if penalty_form == "raw" else 1.0 + decrease_rate
    defects = np.flatnonzero(mask) + 1  # 1-based transaction positions
    samples = _sample_positions(n, stride)
    out = np.empty(len(samples), dtype=np.float64)
    r = 0.0
    last = 0
    di = 0
    n_defects = len(defects)
    for si, t in enumerate(samples):
        while di < n_defects and defects[di] <= t:
            d = int(defects[di])
            r += d - 1 - last
            r /= divisor
            last = d
            di += 1
        r += t - last
        last = int(t)
        out[si] = r
    return samples, out, out / samples


def naive_single_seller(
    mask: np.ndarray, decrease_rate: float, penalty_form: str = "rate"
) -> np.ndarray:
    """Reference per-transaction loop for the fold; returns r after every txn."""
    divisor = decrease_rate if penalty_form == "raw" else 1.0 + decrease_rate
    r = 0.0
    out = np.empty(len(mask), dtype=np.float64)
    for t, bad in enumerate(mask):
        if bad:
            r /= divisor
        else:
            r += 1.0
        out[t] = r
    return out


def basic_world(decrease_rate: float, penalty_form: str = "rate") -> tuple[Ledger, ReputationEngine]:
    """Minimal one-manufacturer world for ledger-backed single-seller runs."""
    ledger = Ledger()
    ledger.add_chain("main")
    ledger.add_entity(Entity("maker", Role.CHIPLET_MANUFACTURER, "main"))
    ledger.add_entity(Entity("checker", Role.IC_MANUFACTURER, "main"))
    ledger.add_entity(Entity("ta@main", Role.TRUSTED_AUTHORITY, "main"))
    ledger.register_chiplet_type("maker", "part")
    view = ObserverView("main", frozenset({"main"}))
    params = ReputationParams(decrease_rate=decrease_rate, penalty_form=penalty_form)
    engine = ledger.attach(ReputationEngine(view, params))
    return ledger, engine


def ledger_single_seller(
    mask: np.ndarray,
    decrease_rate: float,
    stride: int = DEFAULT_STRIDE,
    penalty_form: str = "rate",
) -> tuple[np.ndarray, np.ndarray, np.ndarray, Ledger]:
    """Drive the basic scenario through the full ledger; slow, used as a cross-check."""
    ledger, engine = basic_world(decrease_rate, penalty_form)
    samples = _sample_positions(len(mask), stride)
    out_r = np.empty(len(samples))
    out_norm = np.empty(len(samples))
    price = [Money(1.0)]
    si = 0
    for t, bad in enumerate(mask, start=1):
        hid = f"{t:064x}"
        ledger.register_devices("maker", "part", [hid])
        ledger.transfer_chiplets("maker", "part", 1, [hid], price, "checker")
        ledger.confirm_transfer("checker", "part", 1, [hid])
        rid = ledger.report("checker", [hid], int(bad))
        if bad:
            ledger.adjudicate("ta@main", rid, [hid])
        if si < len(samples) and samples[si] == t:
            rep = engine.reputation("maker")
            out_r[si] = rep.r
            out_norm[si] = normalized_score(rep)
            si += 1
    return samples, out_r, out_norm, ledger


def basic_curve(
    decrease_rate: float,
    defect_prob: float,
    n_txn: int,
    seed: int,
    stride: int = DEFAULT_STRIDE,
    backend: str = "closed_form",
) -> Series:
    """One basic-simulation trajectory for a (decrease rate, defect prob) cell."""
    mask = defect_mask(n_txn, defect_prob, seed)
    if backend == "closed_form":
        idx, r, norm = fold_single_seller(mask, decrease_rate, stride)
    elif backend == "ledger":
        idx, r, norm, _ = ledger_single_seller(mask, decrease_rate, stride)
    else:
        raise InvalidConfig(f"unknown basic backend {backend!r}")
    label = f"m={decrease_rate:g} p={defect_prob:g}"
    meta = {"m": decrease_rate, "defect_prob": defect_prob, "seed": seed, "n": n_txn}
    return Series(label, idx, r, norm, meta)


def run_basic(
    m_values: Sequence[float],
    defect_probs: Sequence[float],
    n_txn: int,
    seed: int,
    out_dir: str | Path | None = None,
    stride: int = DEFAULT_STRIDE,
    backend: str = "closed_form",
) -> dict[tuple[float, float], Series]:
    """Sweep the (decrease rate, defect prob) grid; one CSV per cell if out_dir given."""
    if not m_values or not defect_probs:
        raise InvalidConfig("basic sweep needs a non-empty grid")
    if n_txn < 1:
        raise InvalidConfig("n_txn must be >= 1")
    curves = {}
    for m in m_values:
        for p in defect_probs:
            series = basic_curve(m, p, n_txn, seed, stride, backend)
            curves[(m, p)] = series
            if out_dir is not None:
                path = Path(out_dir) / f"basic_m{m:g}_p{p:g}_seed{seed}.csv"
                write_series_csv(path, series)
    return curves


def run_attack(
    benign_p: float,
    malicious_ps: Sequence[float],
    switch_at: int,
    n_txn: int,
    seed: int,
    out_dir: str | Path | None = None,
    stride: int = DEFAULT_STRIDE,
    decrease_rate: float = ATTACK_DECREASE_RATE,
) -> dict[str, Series]:
    """Benign, always-malicious, and sleeper trajectories on shared uniforms.

    The sleeper behaves at the benign level until ``switch_at``, then at the
    malicious level; sharing one uniform stream per seed makes its pre-switch
    trajectory identical to the benign one.
    """
    if not 0 <= switch_at < n_txn:
        raise InvalidConfig("switch_at must lie before the end of the stream")
    if not malicious_ps:
        raise InvalidConfig("at least one malicious level is required")
    u = uniform_draws(n_txn, seed)
    masks: dict[str, np.ndarray] = {"benign": u < benign_p}
    for p in malicious_ps:
        masks[f"malicious-{p:g}"] = u < p
        thresholds = np.where(np.arange(n_txn) < switch_at, benign_p, p)
        masks[f"sleeper-{p:g}"] = u < thresholds
    curves = {}
    for label, mask in masks.items():
        idx, r, norm = fold_single_seller(mask, decrease_rate, stride)
        meta = {
            "behavior": label,
            "benign_p": benign_p,
            "switch_at": switch_at,
            "seed": seed,
            "m": decrease_rate,
            "n": n_txn,
        }
        curves[label] = Series(label, idx, r, norm, meta)
        if out_dir is not None:
            path = Path(out_dir) / f"attack_{label}_seed{seed}.csv"
            write_series_csv(path, curves[label], behavior=label)
    return curves


# ---------------------------------------------------------------------------
# End-to-end experiment
# ---------------------------------------------------------------------------


@dataclass
class AggregateSeries:
    """Mean and 95th-percentile reputation per (consortium, role) over time."""

    txn_index: np.ndarray
    groups: dict[tuple[str, str], dict[str, np.ndarray]]


@dataclass
class EndToEndResult:
    topology: Topology
    replay: ReplayResult
    aggregate: AggregateSeries
    params: ReputationParams

    @property
    def engine(self) -> ReputationEngine:
        return self.replay.engines[0]

    def consortium_final_normalized(self) -> dict[str, float]:
        """Mean final normalized score per consortium over selling roles."""
        engine = self.engine
        sums: dict[str, list[float]] = {}
        for entity in self.topology.entities:
            if entity.role in SELLING_ROLES:
                sums.setdefault(entity.chain, []).append(engine.normalized(entity.id))
        return {chain: float(np.mean(vals)) for chain, vals in sorted(sums.items())}


def aggregate_by_consortium(result: ReplayResult, topology: Topology) -> AggregateSeries:
    groups: dict[tuple[str, str], list[int]] = {}
    for j, eid in enumerate(result.sample_entities):
        entity = result.ledger.entities[eid]
        if entity.role in SELLING_ROLES:
            groups.setdefault((entity.chain, entity.role.value), []).append(j)
    series: dict[tuple[str, str], dict[str, np.ndarray]] = {}
    for key in sorted(groups):
        cols = groups[key]
        r = result.sample_r[:, cols]
        norm = result.sample_norm[:, cols]
        series[key] = {
            "mean_r": r.mean(axis=1),
            "p95_r": np.percentile(r, 95, axis=1),
            "mean_norm": norm.mean(axis=1),
            "p95_norm": np.percentile(norm, 95, axis=1),
        }
    return AggregateSeries(result.sample_indices, series)


def run_end_to_end(
    cfg: SimConfig,
    behaviors: Mapping[EntityId, BehaviorProfile] | None = None,
    seed: int | None = None,
    params: ReputationParams | None = None,
    stride: int = DEFAULT_STRIDE,
    out_dir: str | Path | None = None,
) -> EndToEndResult:
    """Full pipeline: topology, stream, replay, consortium aggregation.

    Without an explicit behavior map, trusted-consortium manufacturers produce
    defects at the benign rate and untrusted-consortium ones at an elevated
    rate.
    """
    if seed is not None and seed != cfg.rng_seed:
        cfg = dataclasses.replace(cfg, rng_seed=seed)
    cfg.validate()
    params = params or ReputationParams()
    topology = build_topology(cfg)
    if behaviors is None:
        per_chain = {chain: UNTRUSTED_DEFECT_PROB for chain, trusted in cfg.chains if not trusted}
        behaviors = assign_behaviors(topology, uniform_p=TRUSTED_DEFECT_PROB, per_chain=per_chain)
    engine = ReputationEngine(topology.view, params)
    result = replay(
        generate_stream(topology, cfg, behaviors),
        engines=[engine],
        sample_stride=stride,
    )
    aggregate = aggregate_by_consortium(result, topology)
    out = EndToEndResult(topology, result, aggregate, params)
    if out_dir is not None:
        write_aggregate_csv(
            Path(out_dir) / f"end_to_end_seed{cfg.rng_seed}.csv",
            aggregate,
            {"n": cfg.n_transactions, "seed": cfg.rng_seed},
        )
    return out


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


def oracle_recompute(
    records: Iterable[tuple],
    params: ReputationParams,
    view: ObserverView,
) -> dict[EntityId, tuple[float, float]]:
    """Recompute every entity's (r, r_ideal) from scratch off an operation log.

    Walks the serialized records, rebuilds each part's provenance path
    (including cross-chain split hops), and applies the reward and penalty
    rules directly per completed lifecycle. Deliberately shares no code with
    the incremental engine beyond the parameter set.
    """
    entity_info: dict[str, tuple[str, str]] = {}  # id -> (role, chain)
    type_kind: dict[str, str] = {}
    part_type_of: dict[str, str] = {}
    paths: dict[str, list[tuple[str, str, float, str]]] = {}
    consumed_into: dict[str, str] = {}
    pending: dict[frozenset, tuple] = {}
    reports: dict[str, tuple[str, tuple, int]] = {}
    n_reports = 0
    rep_r: dict[str, float] = {}
    rep_ideal: dict[str, float] = {}
    rates = params.exchange.rates
    raw_form = params.penalty_form == "raw"

    def credit(seller: str, value: float, ideal_only: bool = False) -> None:
        rep_ideal[seller] = rep_ideal.get(seller, 0.0) + value
        if not ideal_only:
            rep_r[seller] = rep_r.get(seller, 0.0) + value

    for rec in records:
        op = rec[0]
        if op == "entity":
            entity_info[rec[1]] = (rec[2], rec[3])
        elif op == "meta":
            meta_id = f"X^{rec[1]}_{rec[2]}"
            entity_info.setdefault(meta_id, ("META", rec[1]))
        elif op == "type":
            type_kind[rec[1]] = rec[2]
        elif op == "devices":
            for hid in rec[3]:
                part_type_of[hid] = rec[2]
                paths[hid] = []
        elif op == "transfer":
            _, _kind, _ptype, src, dst, ids, amounts, currency = rec
            pending[frozenset(ids)] = (src, dst, ids, amounts, currency)
        elif op == "confirm":
            src, dst, ids, amounts, currency = pending.pop(frozenset(rec[3]))
            src_chain = entity_info[src][1]
            dst_chain = entity_info[dst][1]
            if src_chain != dst_chain:
                meta_id = f"X^{src_chain}_{dst_chain}"
                entity_info.setdefault(meta_id, ("META", src_chain))
                for hid, amount in zip(ids, amounts):
                    paths[hid].append((src, meta_id, amount, currency))
                    paths[hid].append((meta_id, dst, amount, currency))
            else:
                for hid, amount in zip(ids, amounts):
                    paths[hid].append((src, dst, amount, currency))
        elif op == "reject":
            pending.pop(frozenset(rec[3]))
        elif op == "consume":
            for hid in rec[2]:
                consumed_into[hid] = rec[3]
        elif op == "report":
            n_reports += 1
            rid = f"R{n_reports:06d}"
            reports[rid] = (rec[1], rec[2], rec[3])
            if rec[3] == 0:
                for hid in rec[2]:
                    for seller, _buyer, amount, currency in paths[hid]:
                        credit(seller, amount * rates[currency])
        elif op == "adjudicate":
            _, _ta, rid, defective, origin_pairs = rec
            origins = dict(origin_pairs)
            for hid in defective:
                own = paths[hid]
                for seller, _buyer, amount, currency in own:
                    credit(seller, amount * rates[currency], ideal_only=True)
                origin = origins.get(hid)
                pen = (paths[origin] + own) if origin is not None else own
                rate = params.decrease_rate
                for k, (seller, _buyer, _amount, _currency) in enumerate(pen):
                    if k > 0:
                        prev_role, prev_chain = entity_info[pen[k - 1][0]]
                        if prev_role != "META" and prev_chain in view.trusted_chains:
                            rate /= params.trusted_discount
                    divisor = rate if raw_form else 1.0 + rate
                    if seller in rep_r:
                        rep_r[seller] /= divisor
                    else:
                        rep_r[seller] = 0.0
    out = {}
    for eid in set(rep_r) | set(rep_ideal):
        out[eid] = (rep_r.get(eid, 0.0), rep_ideal.get(eid, 0.0))
    return out


def relative_deviation(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1.0)


def oracle_max_deviation(
    engine: ReputationEngine,
    records: Iterable[tuple],
) -> float:
    """Max relative deviation between the engine and a from-scratch recompute."""
    oracle = oracle_recompute(records, engine.params, engine.view)
    worst = 0.0
    ids = set(oracle) | set(engine.known_entities())
    for eid in ids:
        rep = engine.reputation(eid)
        o_r, o_ideal = oracle.get(eid, (0.0, 0.0))
        worst = max(worst, relative_deviation(rep.r, o_r), relative_deviation(rep.r_ideal, o_ideal))
    return worst


ORACLE_TOLERANCE = 1e-9


# ---------------------------------------------------------------------------
# CSV and trace export
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{value:.6f}"
    return str(value)


def export_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    comment: str = "",
) -> Path:
    """Write rows as CSV with an optional leading '#' comment line.

    Output is deterministic for deterministic input; floats are fixed-point
    with six decimals. I/O errors carry the target path.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def _meta_comment(meta: Mapping) -> str:
    return " ".join(f"{k}={v}" for k, v in meta.items())


def write_series_csv(path, series: Series, behavior: str | None = None) -> Path:
    comment = _meta_comment(series.meta)
    if behavior is None:
        header = ["txn_index", "r", "normalized"]
        rows = zip(series.txn_index, series.r, series.normalized)
    else:
        header = ["txn_index", "behavior", "r", "normalized"]
        rows = (
            (t, behavior, r, norm)
            for t, r, norm in zip(series.txn_index, series.r, series.normalized)
        )
    return export_csv(path, header, rows, comment)


def write_aggregate_csv(path, aggregate: AggregateSeries, meta: Mapping) -> Path:
    header = ["txn_index", "consortium_id", "role", "mean_r", "p95_r", "mean_norm", "p95_norm"]

    def rows():
        for i, t in enumerate(aggregate.txn_index):
            for (chain, role), arrs in aggregate.groups.items():
                yield (
                    t,
                    chain,
                    role,
                    arrs["mean_r"][i],
                    arrs["p95_r"][i],
                    arrs["mean_norm"][i],
                    arrs["p95_norm"][i],
                )

    return export_csv(path, header, rows(), _meta_comment(meta))


def write_scores_csv(path, engine: ReputationEngine, meta: Mapping | None = None) -> Path:
    header = ["entity_id", "role", "chain_id", "r", "r_ideal", "normalized"]
    return export_csv(path, header, engine.score_rows(), _meta_comment(meta or {}))


def write_traces(path, traces: Sequence[PenaltyTrace]) -> Path:
    """Penalty traces as newline-delimited JSON for audit."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            obj = {
                "part": trace.part,
                "entries": [
                    {"entity": eid, "rate": rate, "divisor": divisor}
                    for eid, rate, divisor in trace.entries
                ],
            }
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")
    return path


class TracingEngine(ReputationEngine):
    """Engine variant that additionally records penalty traces for audit export."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.traces: list[PenaltyTrace] = []

    def lifecycle_failed(self, own_path, penalty_path=None, part=""):
        trace = super().lifecycle_failed(own_path, penalty_path, part)
        self.traces.append(trace)
        return trace
