"""Deterministic append-only multi-chain ledger.

The ledger is a single-writer state machine over an ordered operation log:
every mutating call validates its arguments against current state, appends one
log record, then applies it. State is a pure function of the log, so replaying
the records into a fresh ledger reproduces the state byte-for-byte (checked by
comparing canonical JSON serializations). The log persists as newline-delimited
JSON, one operation per line with fixed field order; replay from that file is
the recovery mechanism.

Device transfers are two-phase: the seller initiates, parts are locked in
transit, and ownership moves only when the named destination confirms. A
destination may instead reject, returning the parts to their owner. Transfers
whose endpoints sit on different chains are routed through a per-ordered-pair
meta-entity, so the recorded provenance of a cross-chain sale is two edges,
seller to meta-entity and meta-entity to buyer.

Read-only verification never touches the log: looking up an unknown id emits a
suspicious-device flag into a side event list and nothing else.

Reputation engines subscribe as observers. The ledger notifies them when a
part's lifecycle completes: a passing report rewards every seller along the
part's path, and a trusted-authority adjudication penalizes the sellers along
the defective part's attribution path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

from .domain import (
    STANDARD_TABLE,
    ChainId,
    Entity,
    EntityId,
    ExchangeTable,
    HashedDeviceId,
    Money,
    Role,
    is_hashed_id,
)
from .errors import (
    AlreadyExists,
    Conflict,
    CountMismatch,
    InvalidArgument,
    InvalidState,
    NotFound,
    NotOwner,
    PermissionDenied,
)
from .reputation import Edge, PenaltyTrace, ReputationEngine


class PartKind(str, Enum):
    CHIPLET = "chiplet"
    IC = "ic"


class PartStatus(str, Enum):
    REGISTERED = "registered"
    IN_TRANSIT = "in_transit"
    OWNED = "owned"
    CONSUMED = "consumed_into_ic"
    VERIFIED_OK = "verified_ok"
    DEFECTIVE = "defective"
    SUSPICIOUS = "suspicious"


class TxnStatus(str, Enum):
    PENDING = "pending"
    CONFIRMED = "confirmed"
    REJECTED = "rejected"


#: Statuses from which a part may be transferred or consumed.
TRANSFERABLE = frozenset({PartStatus.REGISTERED, PartStatus.OWNED, PartStatus.VERIFIED_OK})

#: Caller roles allowed to initiate transfers, by part kind.
TRANSFER_ROLES: Mapping[PartKind, frozenset[Role]] = {
    PartKind.CHIPLET: frozenset({Role.CHIPLET_MANUFACTURER, Role.CHIPLET_DISTRIBUTOR}),
    PartKind.IC: frozenset({Role.IC_MANUFACTURER, Role.IC_DISTRIBUTOR}),
}

#: Reporter roles allowed to verify a lifecycle, by part kind. Chiplets are
#: verified where their lifecycle ends (an IC manufacturer); ICs at a system
#: integrator or end user.
REPORTER_ROLES: Mapping[PartKind, frozenset[Role]] = {
    PartKind.CHIPLET: frozenset({Role.IC_MANUFACTURER}),
    PartKind.IC: frozenset({Role.SYSTEM_INTEGRATOR, Role.END_USER}),
}

#: Roles with exclusive authority to register device types, by kind.
TYPE_REGISTRAR_ROLES: Mapping[PartKind, Role] = {
    PartKind.CHIPLET: Role.CHIPLET_MANUFACTURER,
    PartKind.IC: Role.IC_MANUFACTURER,
}


@dataclass(slots=True)
class PartType:
    id: str
    kind: PartKind
    registrant: EntityId


@dataclass(slots=True)
class PartRecord:
    """One chiplet or IC instance and its accumulated provenance path."""

    hashed_id: HashedDeviceId
    part_type: str
    owner: EntityId
    status: PartStatus = PartStatus.REGISTERED
    consumed_into: HashedDeviceId | None = None
    path: list[Edge] = field(default_factory=list)


@dataclass(slots=True)
class Transaction:
    """One batched device transfer: the unit of the recorded transaction stream.

    ``ids`` is lexicographically sorted and ``amounts[k]`` is the per-unit sale
    price of ``ids[k]``. ``via_meta`` names the meta-entity interposed when the
    transfer crossed chains.
    """

    seq: int
    part_type: str
    source: EntityId
    dest: EntityId
    ids: tuple[HashedDeviceId, ...]
    amounts: tuple[float, ...]
    currency: str
    status: TxnStatus = TxnStatus.PENDING
    via_meta: EntityId | None = None

    @property
    def count(self) -> int:
        return len(self.ids)


@dataclass(slots=True)
class VerificationReport:
    report_id: str
    reporter: EntityId
    ids: tuple[HashedDeviceId, ...]
    result: int
    ta_outcome: tuple[HashedDeviceId, ...] | None = None
    defect_origins: tuple[tuple[HashedDeviceId, HashedDeviceId], ...] = ()


@dataclass(slots=True)
class VerifyResult:
    """Outcome of a read-only lookup; absence is a result, not an error."""

    found: bool
    owner: EntityId | None = None
    status: PartStatus | None = None


@dataclass(slots=True)
class AdjudicationResult:
    report_id: str
    defective: tuple[HashedDeviceId, ...]
    traces: list[PenaltyTrace]


class Ledger:
    """In-process deterministic ledger over an ordered operation log."""

    def __init__(self, exchange: ExchangeTable = STANDARD_TABLE) -> None:
        self.exchange = exchange
        self._chains: set[ChainId] = set()
        self._entities: dict[EntityId, Entity] = {}
        self._types: dict[str, PartType] = {}
        self._parts: dict[HashedDeviceId, PartRecord] = {}
        self._pending: dict[frozenset[HashedDeviceId], Transaction] = {}
        self._txns: list[Transaction] = []
        self._reports: dict[str, VerificationReport] = {}
        self._meta: dict[tuple[ChainId, ChainId], EntityId] = {}
        self._log: list[tuple] = []
        self.suspicious_events: list[tuple[EntityId, HashedDeviceId]] = []
        self._observers: list[ReputationEngine] = []

    # -- registries ----------------------------------------------------------

    @property
    def entities(self) -> Mapping[EntityId, Entity]:
        return self._entities

    @property
    def chains(self) -> frozenset[ChainId]:
        return frozenset(self._chains)

    @property
    def transactions(self) -> Sequence[Transaction]:
        return self._txns

    @property
    def parts(self) -> Mapping[HashedDeviceId, PartRecord]:
        return self._parts

    def entity(self, entity_id: EntityId) -> Entity:
        entity = self._entities.get(entity_id)
        if entity is None:
            raise NotFound(f"unknown entity {entity_id!r}")
        return entity

    def part(self, hashed_id: HashedDeviceId) -> PartRecord:
        part = self._parts.get(hashed_id)
        if part is None:
            raise NotFound(f"unknown part {hashed_id!r}")
        return part

    def part_type(self, name: str) -> PartType:
        ptype = self._types.get(name)
        if ptype is None:
            raise NotFound(f"unknown part type {name!r}")
        return ptype

    def report_record(self, report_id: str) -> VerificationReport:
        rep = self._reports.get(report_id)
        if rep is None:
            raise NotFound(f"unknown report {report_id!r}")
        return rep

    def log_length(self) -> int:
        return len(self._log)

    def attach(self, engine: ReputationEngine) -> ReputationEngine:
        """Subscribe a reputation engine to lifecycle events from now on."""
        engine.entities = self._entities
        self._observers.append(engine)
        return engine

    @property
    def observers(self) -> Sequence[ReputationEngine]:
        return self._observers

    # -- world setup ----------------------------------------------------------

    def add_chain(self, chain_id: ChainId) -> None:
        if not chain_id:
            raise InvalidArgument("chain id must be non-empty")
        if chain_id in self._chains:
            raise AlreadyExists(f"chain {chain_id!r} already registered")
        self._log.append(("chain", chain_id))
        self._chains.add(chain_id)

    def add_entity(self, entity: Entity) -> None:
        if entity.id in self._entities:
            raise AlreadyExists(f"entity {entity.id!r} already registered")
        if entity.chain not in self._chains:
            raise NotFound(f"unknown chain {entity.chain!r}")
        if entity.role is Role.META_ENTITY:
            raise PermissionDenied("meta-entities are created only by cross-chain splits")
        self._log.append(("entity", entity.id, entity.role.value, entity.chain))
        self._entities[entity.id] = entity

    # -- type and device registration -----------------------------------------

    def register_chiplet_type(self, caller: EntityId, type_name: str) -> str:
        return self._register_type(caller, type_name, PartKind.CHIPLET)

    def register_ic_type(self, caller: EntityId, type_name: str) -> str:
        return self._register_type(caller, type_name, PartKind.IC)

    def _register_type(self, caller: EntityId, type_name: str, kind: PartKind) -> str:
        if not type_name:
            raise InvalidArgument("type name must be non-empty")
        entity = self.entity(caller)
        if entity.role is not TYPE_REGISTRAR_ROLES[kind]:
            raise PermissionDenied(
                f"role {entity.role.value} may not register {kind.value} types"
            )
        if type_name in self._types:
            raise AlreadyExists(f"part type {type_name!r} already registered")
        self._log.append(("type", type_name, kind.value, caller))
        self._types[type_name] = PartType(type_name, kind, caller)
        return type_name

    def register_devices(
        self, caller: EntityId, part_type: str, ids: Iterable[HashedDeviceId]
    ) -> int:
        ptype = self.part_type(part_type)
        self.entity(caller)
        if caller != ptype.registrant:
            raise PermissionDenied(f"{caller!r} is not the registrant of {part_type!r}")
        id_list = sorted(set(ids))
        if not id_list:
            raise InvalidArgument("no device ids supplied")
        for hid in id_list:
            if not is_hashed_id(hid):
                raise InvalidArgument(f"malformed hashed id {hid!r}")
            if hid in self._parts:
                raise AlreadyExists(f"device {hid!r} already registered")
        record = ("devices", caller, part_type, tuple(id_list))
        self._log.append(record)
        for hid in id_list:
            self._parts[hid] = PartRecord(hid, part_type, caller)
        return len(id_list)

    # -- two-phase transfer ----------------------------------------------------

    def transfer_chiplets(
        self,
        caller: EntityId,
        part_type: str,
        n: int,
        ids: Iterable[HashedDeviceId],
        sale_prices: Sequence[Money],
        dest: EntityId,
    ) -> Transaction:
        return self._transfer(PartKind.CHIPLET, caller, part_type, n, ids, sale_prices, dest)

    def transfer_ics(
        self,
        caller: EntityId,
        part_type: str,
        n: int,
        ids: Iterable[HashedDeviceId],
        sale_prices: Sequence[Money],
        dest: EntityId,
    ) -> Transaction:
        return self._transfer(PartKind.IC, caller, part_type, n, ids, sale_prices, dest)

    def _transfer(
        self,
        kind: PartKind,
        caller: EntityId,
        part_type: str,
        n: int,
        ids: Iterable[HashedDeviceId],
        sale_prices: Sequence[Money],
        dest: EntityId,
    ) -> Transaction:
        id_list = sorted(set(ids))
        if n != len(id_list) or n != len(sale_prices):
            raise CountMismatch(
                f"declared {n} units, got {len(id_list)} ids and {len(sale_prices)} prices"
            )
        if n == 0:
            raise InvalidArgument("cannot transfer zero devices")
        if dest == caller:
            raise InvalidArgument("source and destination must differ")
        src_entity = self.entity(caller)
        dst_entity = self.entity(dest)
        if dst_entity.role is Role.META_ENTITY:
            raise InvalidArgument("meta-entities cannot be a transfer destination")
        if src_entity.role not in TRANSFER_ROLES[kind]:
            raise PermissionDenied(
                f"role {src_entity.role.value} may not transfer {kind.value}s"
            )
        ptype = self.part_type(part_type)
        if ptype.kind is not kind:
            raise InvalidArgument(f"part type {part_type!r} is not a {kind.value} type")
        currency = sale_prices[0].currency
        for price in sale_prices:
            if price.currency != currency:
                raise InvalidArgument("all sale prices in one transfer must share a currency")
        self.exchange.rate(currency)  # unknown currencies never enter the log
        for hid in id_list:
            part = self.part(hid)
            if part.part_type != part_type:
                raise InvalidArgument(f"device {hid!r} is not of type {part_type!r}")
            if part.owner != caller:
                raise NotOwner(f"{caller!r} does not own device {hid!r}")
            if part.status is PartStatus.IN_TRANSIT:
                raise Conflict(f"device {hid!r} is already in transit")
            if part.status not in TRANSFERABLE:
                raise Conflict(f"device {hid!r} is {part.status.value}, not transferable")
        amounts = tuple(p.amount for p in sale_prices)
        record = ("transfer", kind.value, part_type, caller, dest, tuple(id_list), amounts, currency)
        self._log.append(record)
        txn = Transaction(
            seq=len(self._txns) + 1,
            part_type=part_type,
            source=caller,
            dest=dest,
            ids=tuple(id_list),
            amounts=amounts,
            currency=currency,
        )
        self._txns.append(txn)
        self._pending[frozenset(id_list)] = txn
        for hid in id_list:
            self._parts[hid].status = PartStatus.IN_TRANSIT
        return txn

    def _find_pending(
        self, part_type: str, ids: Iterable[HashedDeviceId]
    ) -> tuple[frozenset[HashedDeviceId], Transaction]:
        key = frozenset(ids)
        txn = self._pending.get(key)
        if txn is None or txn.part_type != part_type:
            raise NotFound("no matching pending transfer for these ids")
        return key, txn

    def confirm_transfer(
        self, caller: EntityId, part_type: str, n: int, ids: Iterable[HashedDeviceId]
    ) -> Transaction:
        id_set = frozenset(ids)
        if n != len(id_set):
            raise CountMismatch(f"declared {n} units, got {len(id_set)} ids")
        key, txn = self._find_pending(part_type, id_set)
        if txn.dest != caller:
            raise PermissionDenied(f"{caller!r} is not the destination of this transfer")
        self._log.append(("confirm", caller, part_type, txn.ids))
        del self._pending[key]
        txn.status = TxnStatus.CONFIRMED
        src_chain = self._entities[txn.source].chain
        dst_chain = self._entities[txn.dest].chain
        if src_chain != dst_chain:
            txn.via_meta = self._get_or_create_meta(src_chain, dst_chain)
        for hid, amount in zip(txn.ids, txn.amounts):
            part = self._parts[hid]
            part.owner = caller
            part.status = PartStatus.OWNED
            if txn.via_meta is None:
                part.path.append((txn.source, txn.dest, amount, txn.currency))
            else:
                part.path.append((txn.source, txn.via_meta, amount, txn.currency))
                part.path.append((txn.via_meta, txn.dest, amount, txn.currency))
        return txn

    def reject_transfer(
        self, caller: EntityId, part_type: str, ids: Iterable[HashedDeviceId]
    ) -> Transaction:
        """Decline a pending transfer, returning the parts to their owner."""
        key, txn = self._find_pending(part_type, ids)
        if txn.dest != caller:
            raise PermissionDenied(f"{caller!r} is not the destination of this transfer")
        self._log.append(("reject", caller, part_type, txn.ids))
        del self._pending[key]
        txn.status = TxnStatus.REJECTED
        for hid in txn.ids:
            self._parts[hid].status = PartStatus.OWNED
        return txn

    # -- cross-chain meta-entities ----------------------------------------------

    def _meta_id(self, src_chain: ChainId, dst_chain: ChainId) -> EntityId:
        return f"X^{src_chain}_{dst_chain}"

    def _get_or_create_meta(self, src_chain: ChainId, dst_chain: ChainId) -> EntityId:
        meta_id = self._meta.get((src_chain, dst_chain))
        if meta_id is None:
            meta_id = self._meta_id(src_chain, dst_chain)
            self._meta[(src_chain, dst_chain)] = meta_id
            self._entities[meta_id] = Entity(meta_id, Role.META_ENTITY, src_chain)
        return meta_id

    def cross_chain_split(self, txn: Transaction) -> tuple[Transaction, Transaction]:
        """Split a cross-chain transaction into its two recorded halves.

        One meta-entity exists per ordered (source-chain, dest-chain) pair; it
        is created lazily, and the creation is logged so replay reproduces it.
        """
        src_chain = self.entity(txn.source).chain
        dst_chain = self.entity(txn.dest).chain
        if src_chain == dst_chain:
            raise InvalidArgument("transaction does not cross chains")
        if (src_chain, dst_chain) not in self._meta:
            self._log.append(("meta", src_chain, dst_chain))
        meta_id = self._get_or_create_meta(src_chain, dst_chain)
        first = Transaction(
            txn.seq, txn.part_type, txn.source, meta_id, txn.ids, txn.amounts,
            txn.currency, txn.status,
        )
        second = Transaction(
            txn.seq, txn.part_type, meta_id, txn.dest, txn.ids, txn.amounts,
            txn.currency, txn.status,
        )
        return first, second

    # -- read-only verification ---------------------------------------------------

    def verify(self, caller: EntityId, hashed_id: HashedDeviceId) -> VerifyResult:
        """Look up a device id. Never modifies ledger state or the log.

        An unknown id raises a suspicious-device flag in the side event list.
        """
        part = self._parts.get(hashed_id)
        if part is None:
            self.suspicious_events.append((caller, hashed_id))
            return VerifyResult(found=False)
        return VerifyResult(found=True, owner=part.owner, status=part.status)

    # -- lifecycle: consume, report, adjudicate ------------------------------------

    def consume_chiplets(
        self, caller: EntityId, chiplet_ids: Iterable[HashedDeviceId], ic_id: HashedDeviceId
    ) -> None:
        """Record chiplets as built into an IC, linking the two provenance paths."""
        entity = self.entity(caller)
        if entity.role is not Role.IC_MANUFACTURER:
            raise PermissionDenied("only IC manufacturers consume chiplets")
        chiplets = sorted(set(chiplet_ids))
        if not chiplets:
            raise InvalidArgument("no chiplet ids supplied")
        ic = self.part(ic_id)
        if self._types[ic.part_type].kind is not PartKind.IC:
            raise InvalidArgument(f"{ic_id!r} is not an IC")
        if ic.owner != caller:
            raise NotOwner(f"{caller!r} does not own IC {ic_id!r}")
        if ic.status not in (PartStatus.REGISTERED, PartStatus.OWNED):
            raise Conflict(f"IC {ic_id!r} is {ic.status.value}")
        for hid in chiplets:
            part = self.part(hid)
            if self._types[part.part_type].kind is not PartKind.CHIPLET:
                raise InvalidArgument(f"{hid!r} is not a chiplet")
            if part.status is PartStatus.CONSUMED:
                raise Conflict(f"chiplet {hid!r} already consumed")
            if part.owner != caller:
                raise NotOwner(f"{caller!r} does not own chiplet {hid!r}")
            if part.status not in (PartStatus.OWNED, PartStatus.VERIFIED_OK):
                raise Conflict(f"chiplet {hid!r} is {part.status.value}")
        self._log.append(("consume", caller, tuple(chiplets), ic_id))
        for hid in chiplets:
            part = self._parts[hid]
            part.status = PartStatus.CONSUMED
            part.consumed_into = ic_id
        return None

    def report(self, caller: EntityId, ids: Iterable[HashedDeviceId], result: int) -> str:
        """File a verification report: 0 = pass, 1 = fail.

        A pass immediately rewards every seller along each part's path and
        marks the parts verified. A fail defers to the chain's trusted
        authority: no reputation changes until adjudication.
        """
        if result not in (0, 1):
            raise InvalidArgument("result must be 0 (pass) or 1 (fail)")
        entity = self.entity(caller)
        id_list = sorted(set(ids))
        if not id_list:
            raise InvalidArgument("no device ids supplied")
        kinds = {self._types[self.part(hid).part_type].kind for hid in id_list}
        if len(kinds) != 1:
            raise InvalidArgument("a report must cover one part kind")
        kind = kinds.pop()
        if entity.role not in REPORTER_ROLES[kind]:
            raise PermissionDenied(f"role {entity.role.value} may not report {kind.value}s")
        for hid in id_list:
            part = self._parts[hid]
            if part.owner != caller:
                raise NotOwner(f"{caller!r} does not own device {hid!r}")
            if part.status is not PartStatus.OWNED:
                raise Conflict(f"device {hid!r} is {part.status.value}, not reportable")
        self._log.append(("report", caller, tuple(id_list), result))
        report_id = f"R{len(self._reports) + 1:06d}"
        self._reports[report_id] = VerificationReport(report_id, caller, tuple(id_list), result)
        if result == 0:
            for hid in id_list:
                part = self._parts[hid]
                part.status = PartStatus.VERIFIED_OK
                for engine in self._observers:
                    engine.lifecycle_passed(part.path)
        return report_id

    def adjudicate(
        self,
        ta: EntityId,
        report_id: str,
        defective: Iterable[HashedDeviceId],
        defect_origins: Mapping[HashedDeviceId, HashedDeviceId] | None = None,
    ) -> AdjudicationResult:
        """Record a trusted authority's outcome for a failed report.

        The outcome is recorded even when ``defective`` is empty, so entities
        that raise false alarms remain identifiable. Each defective part is
        penalized along its own provenance path, unless ``defect_origins``
        traces the defect of a reported IC back to one of its consumed
        chiplets, in which case the joined chiplet-then-IC path is penalized.
        """
        ta_entity = self.entity(ta)
        if ta_entity.role is not Role.TRUSTED_AUTHORITY:
            raise PermissionDenied(f"{ta!r} is not a trusted authority")
        report = self.report_record(report_id)
        if self._entities[report.reporter].chain != ta_entity.chain:
            raise PermissionDenied("adjudicating TA must sit on the reporter's chain")
        if report.result != 1:
            raise InvalidState("only failed reports are adjudicated")
        if report.ta_outcome is not None:
            raise Conflict(f"report {report_id!r} already adjudicated")
        bad = tuple(sorted(set(defective)))
        if not set(bad) <= set(report.ids):
            raise InvalidArgument("defective ids must be a subset of the report's ids")
        origins = dict(defect_origins or {})
        for ic_id, chiplet_id in origins.items():
            if ic_id not in bad:
                raise InvalidArgument(f"origin given for non-defective part {ic_id!r}")
            origin = self.part(chiplet_id)
            if origin.consumed_into != ic_id:
                raise InvalidArgument(f"{chiplet_id!r} was not consumed into {ic_id!r}")
        origin_pairs = tuple(sorted(origins.items()))
        self._log.append(("adjudicate", ta, report_id, bad, origin_pairs))
        report.ta_outcome = bad
        report.defect_origins = origin_pairs
        traces: list[PenaltyTrace] = []
        for hid in bad:
            part = self._parts[hid]
            part.status = PartStatus.DEFECTIVE
            own_path = part.path
            origin_id = origins.get(hid)
            if origin_id is not None:
                penalty_path = self._parts[origin_id].path + part.path
            else:
                penalty_path = own_path
            for engine in self._observers:
                traces.append(engine.lifecycle_failed(own_path, penalty_path, part=hid))
        return AdjudicationResult(report_id, bad, traces)

    # -- queries ---------------------------------------------------------------

    def provenance(
        self, hashed_id: HashedDeviceId, joined: bool = False
    ) -> list[tuple[EntityId, EntityId, float]]:
        """Provenance edges (seller, buyer, standard amount) in acquisition order.

        With ``joined`` a consumed chiplet's path continues through the IC it
        was built into.
        """
        part = self.part(hashed_id)
        edges = list(part.path)
        if joined and part.consumed_into is not None:
            edges.extend(self._parts[part.consumed_into].path)
        rates = self.exchange.rates
        return [(s, b, amount * rates[cur]) for s, b, amount, cur in edges]

    def owned_count(self, owner: EntityId, part_type: str) -> int:
        return sum(
            1
            for part in self._parts.values()
            if part.owner == owner and part.part_type == part_type
        )

    def iter_transactions(self, expand_cross_chain: bool = True) -> Iterator[dict]:
        """The recorded transaction stream as JSON-shaped dicts.

        Cross-chain transfers are expanded into their two split halves, in the
        order seller-to-meta then meta-to-buyer.
        """
        for txn in self._txns:
            if expand_cross_chain and txn.via_meta is not None:
                first, second = (
                    (txn.source, txn.via_meta),
                    (txn.via_meta, txn.dest),
                )
                for src, dst in (first, second):
                    yield self._txn_dict(txn, src, dst)
            else:
                yield self._txn_dict(txn, txn.source, txn.dest)

    @staticmethod
    def _txn_dict(txn: Transaction, src: EntityId, dst: EntityId) -> dict:
        return {
            "seq": txn.seq,
            "part_type": txn.part_type,
            "source": src,
            "dest": dst,
            "unit_amounts": list(txn.amounts),
            "currency": txn.currency,
            "count": txn.count,
            "ids": list(txn.ids),
            "status": txn.status.value,
        }

    # -- serialization and replay ---------------------------------------------

    def state_json(self) -> str:
        """Canonical JSON of the full ledger state (side event list excluded)."""
        state = {
            "chains": sorted(self._chains),
            "entities": [
                {"id": e.id, "role": e.role.value, "chain": e.chain}
                for e in sorted(self._entities.values(), key=lambda e: e.id)
            ],
            "types": [
                {"name": t.id, "kind": t.kind.value, "registrant": t.registrant}
                for t in sorted(self._types.values(), key=lambda t: t.id)
            ],
            "parts": [
                {
                    "id": p.hashed_id,
                    "type": p.part_type,
                    "owner": p.owner,
                    "status": p.status.value,
                    "consumed_into": p.consumed_into,
                    "path": [list(edge) for edge in p.path],
                }
                for p in sorted(self._parts.values(), key=lambda p: p.hashed_id)
            ],
            "transactions": [
                {
                    "seq": t.seq,
                    "type": t.part_type,
                    "source": t.source,
                    "dest": t.dest,
                    "ids": list(t.ids),
                    "amounts": list(t.amounts),
                    "currency": t.currency,
                    "status": t.status.value,
                    "via_meta": t.via_meta,
                }
                for t in self._txns
            ],
            "reports": [
                {
                    "id": r.report_id,
                    "reporter": r.reporter,
                    "ids": list(r.ids),
                    "result": r.result,
                    "ta_outcome": list(r.ta_outcome) if r.ta_outcome is not None else None,
                    "defect_origins": [list(p) for p in r.defect_origins],
                }
                for r in sorted(self._reports.values(), key=lambda r: r.report_id)
            ],
            "meta_entities": [
                {"src": src, "dst": dst, "id": meta_id}
                for (src, dst), meta_id in sorted(self._meta.items())
            ],
        }
        return json.dumps(state, sort_keys=True, separators=(",", ":"))

    def log_records(self) -> Sequence[tuple]:
        return self._log

    def log_lines(self) -> Iterator[str]:
        """The operation log as newline-delimited JSON with fixed field order."""
        for rec in self._log:
            yield json.dumps(_record_to_obj(rec), separators=(",", ":"))

    def save_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.log_lines():
                fh.write(line)
                fh.write("\n")

    def apply_record(self, rec: tuple) -> None:
        """Apply one log record through the public (validating) API."""
        op = rec[0]
        if op == "chain":
            self.add_chain(rec[1])
        elif op == "entity":
            self.add_entity(Entity(rec[1], Role(rec[2]), rec[3]))
        elif op == "meta":
            if (rec[1], rec[2]) not in self._meta:
                self._log.append(("meta", rec[1], rec[2]))
            self._get_or_create_meta(rec[1], rec[2])
        elif op == "type":
            self._register_type(rec[3], rec[1], PartKind(rec[2]))
        elif op == "devices":
            self.register_devices(rec[1], rec[2], rec[3])
        elif op == "transfer":
            _, kind, part_type, src, dst, ids, amounts, currency = rec
            prices = [Money(a, currency) for a in amounts]
            self._transfer(PartKind(kind), src, part_type, len(ids), ids, prices, dst)
        elif op == "confirm":
            self.confirm_transfer(rec[1], rec[2], len(rec[3]), rec[3])
        elif op == "reject":
            self.reject_transfer(rec[1], rec[2], rec[3])
        elif op == "consume":
            self.consume_chiplets(rec[1], rec[2], rec[3])
        elif op == "report":
            self.report(rec[1], rec[2], rec[3])
        elif op == "adjudicate":
            self.adjudicate(rec[1], rec[2], rec[3], dict(rec[4]))
        else:
            raise InvalidArgument(f"unknown log operation {op!r}")

    @classmethod
    def replay(
        cls,
        records: Iterable[tuple],
        exchange: ExchangeTable = STANDARD_TABLE,
        observers: Sequence[ReputationEngine] = (),
    ) -> "Ledger":
        """Rebuild a ledger (and any attached engines) from an operation log."""
        ledger = cls(exchange=exchange)
        for engine in observers:
            ledger.attach(engine)
        for rec in records:
            ledger.apply_record(rec)
        return ledger

    @classmethod
    def from_log_file(
        cls,
        path,
        exchange: ExchangeTable = STANDARD_TABLE,
        observers: Sequence[ReputationEngine] = (),
    ) -> "Ledger":
        return cls.replay(load_log_records(path), exchange=exchange, observers=observers)


def _record_to_obj(rec: tuple) -> dict:
    op = rec[0]
    if op == "chain":
        return {"op": op, "id": rec[1]}
    if op == "entity":
        return {"op": op, "id": rec[1], "role": rec[2], "chain": rec[3]}
    if op == "meta":
        return {"op": op, "src": rec[1], "dst": rec[2]}
    if op == "type":
        return {"op": op, "name": rec[1], "kind": rec[2], "maker": rec[3]}
    if op == "devices":
        return {"op": op, "maker": rec[1], "type": rec[2], "ids": list(rec[3])}
    if op == "transfer":
        return {
            "op": op,
            "kind": rec[1],
            "type": rec[2],
            "src": rec[3],
            "dst": rec[4],
            "ids": list(rec[5]),
            "amounts": list(rec[6]),
            "currency": rec[7],
        }
    if op in ("confirm", "reject"):
        return {"op": op, "caller": rec[1], "type": rec[2], "ids": list(rec[3])}
    if op == "consume":
        return {"op": op, "caller": rec[1], "chiplets": list(rec[2]), "ic": rec[3]}
    if op == "report":
        return {"op": op, "reporter": rec[1], "ids": list(rec[2]), "result": rec[3]}
    if op == "adjudicate":
        return {
            "op": op,
            "ta": rec[1],
            "report": rec[2],
            "defective": list(rec[3]),
            "origins": {ic: chip for ic, chip in rec[4]},
        }
    raise InvalidArgument(f"unknown log operation {op!r}")


def _obj_to_record(obj: dict) -> tuple:
    op = obj["op"]
    if op == "chain":
        return (op, obj["id"])
    if op == "entity":
        return (op, obj["id"], obj["role"], obj["chain"])
    if op == "meta":
        return (op, obj["src"], obj["dst"])
    if op == "type":
        return (op, obj["name"], obj["kind"], obj["maker"])
    if op == "devices":
        return (op, obj["maker"], obj["type"], tuple(obj["ids"]))
    if op == "transfer":
        return (
            op,
            obj["kind"],
            obj["type"],
            obj["src"],
            obj["dst"],
            tuple(obj["ids"]),
            tuple(obj["amounts"]),
            obj["currency"],
        )
    if op in ("confirm", "reject"):
        return (op, obj["caller"], obj["type"], tuple(obj["ids"]))
    if op == "consume":
        return (op, obj["caller"], tuple(obj["chiplets"]), obj["ic"])
    if op == "report":
        return (op, obj["reporter"], tuple(obj["ids"]), obj["result"])
    if op == "adjudicate":
        return (
            op,
            obj["ta"],
            obj["report"],
            tuple(obj["defective"]),
            tuple(sorted(obj["origins"].items())),
        )
    raise InvalidArgument(f"unknown log operation {op!r}")


def load_log_records(path) -> list[tuple]:
    """Parse a newline-delimited ledger log file back into records."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(_obj_to_record(json.loads(line)))
    return records
