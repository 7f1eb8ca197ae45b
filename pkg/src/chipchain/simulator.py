"""Seeded supply-chain simulator: populations, topologies, and event streams.

The generator mimics real part flows. Each chiplet is registered by its
manufacturer, hops through one or more distributors, and lands at an IC
manufacturer that verifies it and reports the outcome. Verified chiplets pool
up at the IC manufacturer; once enough accumulate they are consumed into a
freshly registered IC, which then hops through IC distributors to a system
integrator for its own verification. Unit cost compounds by a configurable
markup on every hop, and hop partners prefer the current holder's own chain,
crossing consortium boundaries with a configurable probability (cross-chain
hops are recorded through meta-entities by the ledger).

Defects are latent: sampled from the manufacturer's behavior profile at
fabrication time, they surface only at the lifecycle verifier. Behavior
profiles support benign, malicious, and sleeper (benign-then-malicious)
entities.

Everything is a pure function of (config, seed). The PRNG is PCG64 (numpy's
default bit generator), so identical configs yield bit-identical streams. A
stream applied to a fresh ledger never violates an operation precondition, and
streams round-trip through newline-delimited JSON for replay without
regeneration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .domain import ChainId, Entity, EntityId, Money, Role, hash_device_id
from .errors import InvalidConfig
from .ledger import Ledger, PartKind, PartStatus
from .reputation import ObserverView, ReputationEngine

SimEvent = dict[str, Any]

_ROLE_PREFIX = {
    Role.CHIPLET_MANUFACTURER: "cm",
    Role.CHIPLET_DISTRIBUTOR: "cd",
    Role.IC_MANUFACTURER: "icm",
    Role.IC_DISTRIBUTOR: "icd",
    Role.SYSTEM_INTEGRATOR: "si",
}


@dataclass(frozen=True)
class SimConfig:
    """Population sizes, chain layout, economics, and the stream seed."""

    chiplet_mfrs: int = 100
    chiplet_dists: int = 1000
    ic_mfrs: int = 100
    ic_dists: int = 500
    si_count: int = 50
    chains: tuple[tuple[ChainId, bool], ...] = (
        ("TC-1", True),
        ("TC-2", True),
        ("UC-1", False),
        ("UC-2", False),
    )
    assignment: Mapping[EntityId, ChainId] | None = None
    n_transactions: int = 10_000
    markup_pct: float = 10.0
    base_unit_cost: Money = Money(100.0)
    chiplets_per_ic: int = 2
    hop_range: tuple[int, int] = (1, 3)
    cross_chain_prob: float = 0.15
    rng_seed: int = 0

    def validate(self) -> None:
        counts = {
            "chiplet_mfrs": self.chiplet_mfrs,
            "chiplet_dists": self.chiplet_dists,
            "ic_mfrs": self.ic_mfrs,
            "ic_dists": self.ic_dists,
            "si_count": self.si_count,
        }
        for name, value in counts.items():
            if value < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {value}")
        if self.n_transactions < 1:
            raise InvalidConfig("n_transactions must be >= 1")
        if self.markup_pct < 0:
            raise InvalidConfig("markup_pct must be >= 0")
        if self.chiplets_per_ic < 1:
            raise InvalidConfig("chiplets_per_ic must be >= 1")
        lo, hi = self.hop_range
        if lo < 1 or hi < lo:
            raise InvalidConfig(f"hop_range must satisfy 1 <= lo <= hi, got {self.hop_range}")
        if not 0.0 <= self.cross_chain_prob <= 1.0:
            raise InvalidConfig("cross_chain_prob must be in [0, 1]")
        if not self.chains:
            raise InvalidConfig("at least one chain is required")
        names = [c for c, _ in self.chains]
        if len(set(names)) != len(names):
            raise InvalidConfig("chain ids must be unique")
        if not any(trusted for _, trusted in self.chains):
            raise InvalidConfig("at least one chain must be trusted")


@dataclass(frozen=True)
class BehaviorProfile:
    """Defect behavior of a manufacturer, with an optional mid-stream switch."""

    defect_prob: float
    switch_at: int | None = None
    post_switch_prob: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.defect_prob <= 1.0:
            raise InvalidConfig("defect_prob must be in [0, 1]")
        if (self.switch_at is None) != (self.post_switch_prob is None):
            raise InvalidConfig("switch_at and post_switch_prob must be given together")
        if self.post_switch_prob is not None and not 0.0 <= self.post_switch_prob <= 1.0:
            raise InvalidConfig("post_switch_prob must be in [0, 1]")

    def prob_at(self, txn_index: int) -> float:
        if self.switch_at is not None and txn_index >= self.switch_at:
            return float(self.post_switch_prob)
        return self.defect_prob


BENIGN_DEFECT_PROB = 0.001


@dataclass
class Topology:
    """Generated entity population with chain assignment and one observer view."""

    entities: list[Entity]
    by_role: dict[Role, list[EntityId]]
    chain_of: dict[EntityId, ChainId]
    tas: dict[ChainId, EntityId]
    chiplet_type_of: dict[EntityId, str]
    ic_type_of: dict[EntityId, str]
    view: ObserverView

    def manufacturer_ids(self) -> list[EntityId]:
        return self.by_role[Role.CHIPLET_MANUFACTURER] + self.by_role[Role.IC_MANUFACTURER]


def build_topology(cfg: SimConfig) -> Topology:
    """Deterministic population for a config: no randomness is involved.

    Entities of each role are partitioned round-robin across the configured
    chains unless an explicit assignment map overrides them. One trusted
    authority is created per chain.
    """
    cfg.validate()
    chain_names = [c for c, _ in cfg.chains]
    trusted = frozenset(c for c, t in cfg.chains if t)
    assignment = dict(cfg.assignment or {})

    role_counts = [
        (Role.CHIPLET_MANUFACTURER, cfg.chiplet_mfrs),
        (Role.CHIPLET_DISTRIBUTOR, cfg.chiplet_dists),
        (Role.IC_MANUFACTURER, cfg.ic_mfrs),
        (Role.IC_DISTRIBUTOR, cfg.ic_dists),
        (Role.SYSTEM_INTEGRATOR, cfg.si_count),
    ]
    entities: list[Entity] = []
    by_role: dict[Role, list[EntityId]] = {role: [] for role, _ in role_counts}
    chain_of: dict[EntityId, ChainId] = {}
    valid_ids = set()
    for role, count in role_counts:
        width = max(3, len(str(count)))
        for i in range(count):
            valid_ids.add(f"{_ROLE_PREFIX[role]}{i + 1:0{width}d}")
    for unknown in set(assignment) - valid_ids:
        raise InvalidConfig(f"assignment names unknown entity {unknown!r}")
    for bad_chain in set(assignment.values()) - set(chain_names):
        raise InvalidConfig(f"assignment names unknown chain {bad_chain!r}")

    for role, count in role_counts:
        width = max(3, len(str(count)))
        for i in range(count):
            eid = f"{_ROLE_PREFIX[role]}{i + 1:0{width}d}"
            chain = assignment.get(eid, chain_names[i % len(chain_names)])
            entities.append(Entity(eid, role, chain))
            by_role[role].append(eid)
            chain_of[eid] = chain

    tas = {}
    for chain in chain_names:
        ta_id = f"ta@{chain}"
        entities.append(Entity(ta_id, Role.TRUSTED_AUTHORITY, chain))
        chain_of[ta_id] = chain
        tas[chain] = ta_id

    chiplet_type_of = {cm: f"{cm}-chiplet" for cm in by_role[Role.CHIPLET_MANUFACTURER]}
    ic_type_of = {icm: f"{icm}-ic" for icm in by_role[Role.IC_MANUFACTURER]}
    view = ObserverView(observer_chain=sorted(trusted)[0], trusted_chains=trusted)
    return Topology(entities, by_role, chain_of, tas, chiplet_type_of, ic_type_of, view)


def assign_behaviors(
    topology: Topology,
    uniform_p: float = BENIGN_DEFECT_PROB,
    per_chain: Mapping[ChainId, float] | None = None,
    sleepers: Mapping[EntityId, tuple[int, float]] | None = None,
) -> dict[EntityId, BehaviorProfile]:
    """Behavior profile for every manufacturer.

    ``uniform_p`` is the default defect probability, ``per_chain`` overrides it
    per consortium, and ``sleepers`` maps entities to (switch_at,
    post_switch_prob) pairs for benign-then-malicious behavior.
    """
    per_chain = dict(per_chain or {})
    sleepers = dict(sleepers or {})
    known_chains = set(topology.chain_of.values())
    for chain in set(per_chain) - known_chains:
        raise InvalidConfig(f"behavior map names unknown chain {chain!r}")
    manufacturer_ids = set(topology.manufacturer_ids())
    for eid in set(sleepers) - manufacturer_ids:
        raise InvalidConfig(f"sleeper set names unknown manufacturer {eid!r}")
    profiles = {}
    for eid in sorted(manufacturer_ids):
        p = per_chain.get(topology.chain_of[eid], uniform_p)
        if eid in sleepers:
            switch_at, post_p = sleepers[eid]
            profiles[eid] = BehaviorProfile(p, switch_at=switch_at, post_switch_prob=post_p)
        else:
            profiles[eid] = BehaviorProfile(p)
    return profiles


def sample_defect(profile: BehaviorProfile, txn_index: int, rng: np.random.Generator) -> bool:
    """Draw the latent defect bit for a part fabricated at stream position txn_index."""
    return float(rng.random()) < profile.prob_at(txn_index)


class _PartnerPools:
    """Per-role candidate lists, split into same-chain and other-chain pools."""

    def __init__(self, topology: Topology, chains: Sequence[ChainId]):
        self.same: dict[tuple[Role, ChainId], list[EntityId]] = {}
        self.other: dict[tuple[Role, ChainId], list[EntityId]] = {}
        for role, members in topology.by_role.items():
            for chain in chains:
                self.same[(role, chain)] = [e for e in members if topology.chain_of[e] == chain]
                self.other[(role, chain)] = [e for e in members if topology.chain_of[e] != chain]

    def pick(
        self,
        rng: np.random.Generator,
        role: Role,
        home: ChainId,
        exclude: EntityId,
        cross_prob: float,
    ) -> EntityId:
        same = self.same[(role, home)]
        other = self.other[(role, home)]
        if other and (not same or rng.random() < cross_prob):
            pool = other
        else:
            pool = same or other
        idx = int(rng.integers(0, len(pool)))
        choice = pool[idx]
        if choice == exclude and len(pool) > 1:
            choice = pool[(idx + 1) % len(pool)]
        return choice  # equals exclude only for a degenerate one-entity pool


def generate_stream(
    topology: Topology,
    cfg: SimConfig,
    behaviors: Mapping[EntityId, BehaviorProfile] | None = None,
) -> Iterator[SimEvent]:
    """Yield the full event stream: world setup, then interleaved lifecycles.

    Emits exactly ``cfg.n_transactions`` transfer events (each a
    transfer-plus-confirmation pair), truncating the last lifecycle when the
    budget runs out; parts cut off mid-route simply remain in flight.
    """
    cfg.validate()
    if behaviors is None:
        behaviors = assign_behaviors(topology)
    for eid in topology.manufacturer_ids():
        if eid not in behaviors:
            raise InvalidConfig(f"no behavior profile for manufacturer {eid!r}")

    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    chain_names = [c for c, _ in cfg.chains]

    for chain in chain_names:
        yield {"ev": "chain", "id": chain}
    for entity in topology.entities:
        yield {"ev": "entity", "id": entity.id, "role": entity.role.value, "chain": entity.chain}
    for cm, type_name in topology.chiplet_type_of.items():
        yield {"ev": "newtype", "maker": cm, "name": type_name, "kind": PartKind.CHIPLET.value}
    for icm, type_name in topology.ic_type_of.items():
        yield {"ev": "newtype", "maker": icm, "name": type_name, "kind": PartKind.IC.value}

    pools = _PartnerPools(topology, chain_names)
    cms = topology.by_role[Role.CHIPLET_MANUFACTURER]
    base_amount = cfg.base_unit_cost.amount
    currency = cfg.base_unit_cost.currency
    markup = 1.0 + cfg.markup_pct / 100.0
    lo, hi = cfg.hop_range
    chain_of = topology.chain_of

    serial = 0
    txns = 0
    budget = cfg.n_transactions
    # Verified chiplets waiting at each IC manufacturer: (chiplet id, acquisition cost).
    ic_pools: dict[EntityId, list[tuple[str, float]]] = {
        icm: [] for icm in topology.by_role[Role.IC_MANUFACTURER]
    }

    def plan_route(start: EntityId, mid_role: Role, end_role: Role) -> list[EntityId]:
        """Stations for one part: 'lo..hi' mid-role hops, then the verifier."""
        holder = start
        stations = []
        for _ in range(int(rng.integers(lo, hi + 1))):
            nxt = pools.pick(rng, mid_role, chain_of[holder], holder, cfg.cross_chain_prob)
            if nxt != holder:
                stations.append(nxt)
                holder = nxt
        stations.append(pools.pick(rng, end_role, chain_of[holder], holder, cfg.cross_chain_prob))
        return stations

    def xfer_event(kind: PartKind, type_name: str, src, dst, hid, amount) -> SimEvent:
        return {
            "ev": "xfer",
            "kind": kind.value,
            "type": type_name,
            "src": src,
            "dst": dst,
            "ids": [hid],
            "amounts": [amount],
            "currency": currency,
        }

    while txns < budget:
        cm = cms[int(rng.integers(0, len(cms)))]
        serial += 1
        hid = hash_device_id(f"c{serial:09d}")
        defect = sample_defect(behaviors[cm], txns, rng)
        type_name = topology.chiplet_type_of[cm]
        yield {"ev": "register", "maker": cm, "type": type_name, "ids": [hid]}

        stations = plan_route(cm, Role.CHIPLET_DISTRIBUTOR, Role.IC_MANUFACTURER)
        holder, amount, acquisition = cm, base_amount, base_amount
        reached = True
        for i, nxt in enumerate(stations):
            yield xfer_event(PartKind.CHIPLET, type_name, holder, nxt, hid, amount)
            txns += 1
            holder, acquisition = nxt, amount
            amount *= markup
            if txns >= budget:
                reached = i == len(stations) - 1
                break
        if not reached:
            return  # part left in flight; transfer budget exhausted
        icm = holder
        yield {"ev": "report", "reporter": icm, "ids": [hid], "result": int(defect)}
        if defect:
            yield {
                "ev": "adjudicate",
                "ta": topology.tas[chain_of[icm]],
                "reporter": icm,
                "ids": [hid],
                "defective": [hid],
                "origins": {},
            }
            continue
        ic_pools[icm].append((hid, acquisition))
        if len(ic_pools[icm]) < cfg.chiplets_per_ic or txns >= budget:
            continue

        # Enough verified chiplets: build and ship an IC.
        batch = ic_pools[icm][: cfg.chiplets_per_ic]
        del ic_pools[icm][: cfg.chiplets_per_ic]
        serial += 1
        ic_hid = hash_device_id(f"i{serial:09d}")
        ic_defect = sample_defect(behaviors[icm], txns, rng)
        ic_type = topology.ic_type_of[icm]
        yield {"ev": "register", "maker": icm, "type": ic_type, "ids": [ic_hid]}
        yield {
            "ev": "consume",
            "caller": icm,
            "chiplets": sorted(h for h, _ in batch),
            "ic": ic_hid,
        }
        stations = plan_route(icm, Role.IC_DISTRIBUTOR, Role.SYSTEM_INTEGRATOR)
        holder, amount = icm, sum(a for _, a in batch) * markup
        reached = True
        for i, nxt in enumerate(stations):
            yield xfer_event(PartKind.IC, ic_type, holder, nxt, ic_hid, amount)
            txns += 1
            holder = nxt
            amount *= markup
            if txns >= budget:
                reached = i == len(stations) - 1
                break
        if not reached:
            return
        si = holder
        yield {"ev": "report", "reporter": si, "ids": [ic_hid], "result": int(ic_defect)}
        if ic_defect:
            yield {
                "ev": "adjudicate",
                "ta": topology.tas[chain_of[si]],
                "reporter": si,
                "ids": [ic_hid],
                "defective": [ic_hid],
                "origins": {},
            }


@dataclass
class ReplayResult:
    """Final world state plus per-entity reputation samples taken at a stride."""

    ledger: Ledger
    engines: list[ReputationEngine]
    txn_count: int
    sample_indices: np.ndarray
    sample_entities: list[EntityId]
    sample_r: np.ndarray
    sample_norm: np.ndarray
    in_flight: set[str] = field(default_factory=set)


def replay(
    events: Iterable[SimEvent],
    ledger: Ledger | None = None,
    engines: Sequence[ReputationEngine] = (),
    sample_stride: int = 0,
    tracked: Sequence[EntityId] | None = None,
) -> ReplayResult:
    """Apply an event stream to a ledger, sampling reputation as it goes.

    Samples are taken from the first engine each time the running transfer
    count hits a multiple of ``sample_stride`` (plus once at stream end), for
    ``tracked`` entities (default: every non-meta entity, fixed at the first
    sample).
    """
    if ledger is None:
        ledger = Ledger()
    engines = list(engines)
    for engine in engines:
        ledger.attach(engine)

    txn_count = 0
    open_fail_reports: dict[tuple[EntityId, frozenset], str] = {}
    columns: list[EntityId] | None = list(tracked) if tracked is not None else None
    indices: list[int] = []
    rows_r: list[list[float]] = []
    rows_norm: list[list[float]] = []

    def snapshot() -> None:
        nonlocal columns
        if not engines:
            return
        engine = engines[0]
        if columns is None:
            columns = sorted(
                eid for eid, ent in ledger.entities.items() if ent.role is not Role.META_ENTITY
            )
        indices.append(txn_count)
        reps = engine._rep
        row_r = []
        row_n = []
        for eid in columns:
            rep = reps.get(eid)
            if rep is None:
                row_r.append(0.0)
                row_n.append(1.0)
            else:
                row_r.append(rep.r)
                row_n.append(1.0 if rep.r_ideal == 0 else rep.r / rep.r_ideal)
        rows_r.append(row_r)
        rows_norm.append(row_n)

    for ev in events:
        kind = ev["ev"]
        if kind == "xfer":
            prices = [Money(a, ev["currency"]) for a in ev["amounts"]]
            if ev["kind"] == PartKind.CHIPLET.value:
                ledger.transfer_chiplets(
                    ev["src"], ev["type"], len(ev["ids"]), ev["ids"], prices, ev["dst"]
                )
            else:
                ledger.transfer_ics(
                    ev["src"], ev["type"], len(ev["ids"]), ev["ids"], prices, ev["dst"]
                )
            ledger.confirm_transfer(ev["dst"], ev["type"], len(ev["ids"]), ev["ids"])
            txn_count += 1
            if sample_stride and txn_count % sample_stride == 0:
                snapshot()
        elif kind == "register":
            ledger.register_devices(ev["maker"], ev["type"], ev["ids"])
        elif kind == "report":
            rid = ledger.report(ev["reporter"], ev["ids"], ev["result"])
            if ev["result"] == 1:
                open_fail_reports[(ev["reporter"], frozenset(ev["ids"]))] = rid
        elif kind == "adjudicate":
            rid = open_fail_reports.pop((ev["reporter"], frozenset(ev["ids"])))
            ledger.adjudicate(ev["ta"], rid, ev["defective"], ev.get("origins") or {})
        elif kind == "consume":
            ledger.consume_chiplets(ev["caller"], ev["chiplets"], ev["ic"])
        elif kind == "newtype":
            if ev["kind"] == PartKind.CHIPLET.value:
                ledger.register_chiplet_type(ev["maker"], ev["name"])
            else:
                ledger.register_ic_type(ev["maker"], ev["name"])
        elif kind == "entity":
            ledger.add_entity(Entity(ev["id"], Role(ev["role"]), ev["chain"]))
        elif kind == "chain":
            ledger.add_chain(ev["id"])
        else:
            raise InvalidConfig(f"unknown event kind {kind!r}")

    if sample_stride and (not indices or indices[-1] != txn_count):
        snapshot()

    in_flight = set()
    terminal_ic = {PartStatus.VERIFIED_OK, PartStatus.DEFECTIVE}
    terminal_chiplet = {PartStatus.CONSUMED, PartStatus.DEFECTIVE}
    for hid, part in ledger.parts.items():
        kind = ledger.part_type(part.part_type).kind
        terminal = terminal_ic if kind is PartKind.IC else terminal_chiplet
        if part.status not in terminal:
            in_flight.add(hid)

    n_cols = len(columns) if columns else 0
    return ReplayResult(
        ledger=ledger,
        engines=engines,
        txn_count=txn_count,
        sample_indices=np.asarray(indices, dtype=np.int64),
        sample_entities=columns or [],
        sample_r=np.asarray(rows_r, dtype=np.float64).reshape(len(indices), n_cols),
        sample_norm=np.asarray(rows_norm, dtype=np.float64).reshape(len(indices), n_cols),
        in_flight=in_flight,
    )


def save_events(events: Iterable[SimEvent], path) -> None:
    """Write a stream as newline-delimited JSON for later replay."""
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev, separators=(",", ":")))
            fh.write("\n")


def load_events(path) -> Iterator[SimEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
