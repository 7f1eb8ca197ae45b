"""Command-line entry point for simulations, experiments, and log tooling.

Subcommands:

  simulate      generate a stream from a config, replay it, write artifacts
  basic         single-manufacturer reputation curves over an (m, p) grid
  end-to-end    full supply-chain run with per-consortium aggregation
  attack        benign / malicious / sleeper comparison curves
  replay        re-apply an exported event stream without regeneration
  score         query one entity's reputation off a ledger log
  verify-oracle check a ledger log against the brute-force recompute

Every run is reproducible from its flags and seed; output files carry the
parameters in a leading comment line. Exit codes: 0 on success, 1 with a
one-line diagnostic on failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .domain import Money
from .errors import ChipchainError, InvalidConfig
from .harness import (
    ATTACK_DECREASE_RATE,
    BASIC_DEFECT_PROBS,
    BASIC_M_VALUES,
    DEFAULT_STRIDE,
    ORACLE_TOLERANCE,
    TRUSTED_DEFECT_PROB,
    UNTRUSTED_DEFECT_PROB,
    TracingEngine,
    oracle_max_deviation,
    run_attack,
    run_basic,
    run_end_to_end,
    write_aggregate_csv,
    write_scores_csv,
    write_traces,
)
from .ledger import Ledger, load_log_records
from .reputation import ObserverView, ReputationEngine, ReputationParams, normalized_score
from .simulator import (
    SimConfig,
    assign_behaviors,
    build_topology,
    generate_stream,
    load_events,
    replay,
    save_events,
)


def load_config(path: str | None, seed: int | None) -> tuple[SimConfig, dict, ReputationParams]:
    """Parse the JSON config file: {"sim": {...}, "behaviors": {...}, "reputation": {...}}."""
    raw = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    sim_raw = dict(raw.get("sim", {}))
    if "base_unit_cost" in sim_raw:
        sim_raw["base_unit_cost"] = Money(**sim_raw["base_unit_cost"])
    if "chains" in sim_raw:
        sim_raw["chains"] = tuple((c, bool(t)) for c, t in sim_raw["chains"])
    if "hop_range" in sim_raw:
        sim_raw["hop_range"] = tuple(sim_raw["hop_range"])
    unknown = set(sim_raw) - {f.name for f in dataclasses.fields(SimConfig)}
    if unknown:
        raise InvalidConfig(f"unknown sim config keys: {sorted(unknown)}")
    cfg = SimConfig(**sim_raw)
    if seed is not None:
        cfg = dataclasses.replace(cfg, rng_seed=seed)
    cfg.validate()
    params = ReputationParams(**raw.get("reputation", {}))
    return cfg, dict(raw.get("behaviors", {})), params


def build_behaviors(topology, cfg: SimConfig, spec: dict):
    if not spec:
        per_chain = {c: UNTRUSTED_DEFECT_PROB for c, trusted in cfg.chains if not trusted}
        return assign_behaviors(topology, uniform_p=TRUSTED_DEFECT_PROB, per_chain=per_chain)
    sleepers = {k: tuple(v) for k, v in spec.get("sleepers", {}).items()}
    return assign_behaviors(
        topology,
        uniform_p=spec.get("uniform_p", TRUSTED_DEFECT_PROB),
        per_chain=spec.get("per_chain"),
        sleepers=sleepers,
    )


def view_from_flags(args, chains) -> ObserverView:
    trusted = (
        frozenset(args.trusted_chains.split(","))
        if args.trusted_chains
        else frozenset(chains)
    )
    observer = args.observer or sorted(trusted)[0]
    return ObserverView(observer, trusted | {observer})


def params_from_flags(args) -> ReputationParams:
    return ReputationParams(
        decrease_rate=args.m,
        trusted_discount=args.trusted_discount,
        penalty_form=args.penalty_form,
    )


def _add_view_flags(parser: argparse.ArgumentParser, default_m: float = 0.1) -> None:
    parser.add_argument("--m", type=float, default=default_m, help="multiplicative decrease rate")
    parser.add_argument("--trusted-discount", type=float, default=2.0)
    parser.add_argument("--penalty-form", choices=["rate", "raw"], default="rate")
    parser.add_argument("--trusted-chains", help="comma-separated trusted chain ids")
    parser.add_argument("--observer", help="observer chain (default: first trusted)")


def cmd_simulate(args) -> int:
    cfg, behavior_spec, params = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    topology = build_topology(cfg)
    behaviors = build_behaviors(topology, cfg, behavior_spec)
    events_path = out / "events.ndjson"
    save_events(generate_stream(topology, cfg, behaviors), events_path)
    engine = TracingEngine(topology.view, params)
    result = replay(load_events(events_path), engines=[engine], sample_stride=args.stride)
    result.ledger.save_log(out / "ledger.ndjson")
    write_scores_csv(out / "scores.csv", engine, {"seed": cfg.rng_seed, "n": cfg.n_transactions})
    write_traces(out / "penalties.ndjson", engine.traces)
    sim_manifest = {
        k: v
        for k, v in dataclasses.asdict(cfg).items()
        if k not in ("base_unit_cost", "chains", "assignment", "hop_range")
    }
    sim_manifest["base_unit_cost"] = {
        "amount": cfg.base_unit_cost.amount,
        "currency": cfg.base_unit_cost.currency,
    }
    sim_manifest["chains"] = [[c, t] for c, t in cfg.chains]
    sim_manifest["hop_range"] = list(cfg.hop_range)
    if cfg.assignment:
        sim_manifest["assignment"] = dict(cfg.assignment)
    manifest = {
        "sim": sim_manifest,
        "reputation": {
            "decrease_rate": params.decrease_rate,
            "trusted_discount": params.trusted_discount,
            "penalty_form": params.penalty_form,
        },
        "view": {
            "observer_chain": topology.view.observer_chain,
            "trusted_chains": sorted(topology.view.trusted_chains),
        },
    }
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"simulated {result.txn_count} transactions -> {out}")
    return 0


def cmd_basic(args) -> int:
    m_values = args.m if args.m else list(BASIC_M_VALUES)
    probs = args.defect_prob if args.defect_prob else list(BASIC_DEFECT_PROBS)
    curves = run_basic(
        m_values, probs, args.n, args.seed, out_dir=args.out,
        stride=args.stride, backend=args.backend,
    )
    for (m, p), series in sorted(curves.items()):
        print(f"m={m:g} p={p:g} final_normalized={series.final_normalized():.6f}")
    return 0


def cmd_end_to_end(args) -> int:
    cfg, behavior_spec, params = load_config(args.config, args.seed)
    topology = build_topology(cfg)
    behaviors = build_behaviors(topology, cfg, behavior_spec) if behavior_spec else None
    result = run_end_to_end(cfg, behaviors=behaviors, params=params, stride=args.stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(
        out / f"end_to_end_seed{cfg.rng_seed}.csv",
        result.aggregate,
        {"n": cfg.n_transactions, "seed": cfg.rng_seed},
    )
    result.replay.ledger.save_log(out / "ledger.ndjson")
    write_scores_csv(out / "scores.csv", result.engine, {"seed": cfg.rng_seed})
    for chain, mean in result.consortium_final_normalized().items():
        print(f"{chain} mean_normalized={mean:.6f}")
    return 0


def cmd_attack(args) -> int:
    curves = run_attack(
        args.benign_p, args.malicious_p, args.switch_at, args.n, args.seed,
        out_dir=args.out, stride=args.stride, decrease_rate=args.m,
    )
    for label in sorted(curves):
        print(f"{label} final_normalized={curves[label].final_normalized():.6f}")
    return 0


def cmd_replay(args) -> int:
    # Chain declarations lead the stream; scan them first to build the view.
    chains = []
    for ev in load_events(args.events):
        if ev["ev"] != "chain":
            break
        chains.append(ev["id"])
    view = view_from_flags(args, chains or ["main"])
    engine = ReputationEngine(view, params_from_flags(args))
    result = replay(load_events(args.events), engines=[engine], sample_stride=args.stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.ledger.save_log(out / "ledger.ndjson")
    write_scores_csv(out / "scores.csv", engine, {"events": str(args.events)})
    print(f"replayed {result.txn_count} transactions -> {out}")
    return 0


def _engine_from_log(args) -> tuple[ReputationEngine, list[tuple]]:
    records = load_log_records(args.log)
    chains = [rec[1] for rec in records if rec[0] == "chain"]
    view = view_from_flags(args, chains or ["main"])
    engine = ReputationEngine(view, params_from_flags(args))
    Ledger.replay(records, observers=[engine])
    return engine, records


def cmd_score(args) -> int:
    engine, _ = _engine_from_log(args)
    entity = engine.entities.get(args.entity)
    if entity is None:
        print(f"unknown entity {args.entity!r}", file=sys.stderr)
        return 1
    rep = engine.reputation(args.entity)
    print(
        json.dumps(
            {
                "entity_id": args.entity,
                "role": entity.role.value,
                "chain_id": entity.chain,
                "r": rep.r,
                "r_ideal": rep.r_ideal,
                "normalized": normalized_score(rep),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_verify_oracle(args) -> int:
    engine, records = _engine_from_log(args)
    deviation = oracle_max_deviation(engine, records)
    print(f"max_relative_deviation={deviation:.3e} tolerance={ORACLE_TOLERANCE:.0e}")
    return 0 if deviation <= ORACLE_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chipchain",
        description="supply-chain provenance ledger and reputation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate and replay a full stream")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("basic", help="single-manufacturer curve sweep")
    p.add_argument("--m", type=float, action="append", help="decrease rate (repeatable)")
    p.add_argument(
        "--defect-prob", type=float, action="append", help="defect probability (repeatable)"
    )
    p.add_argument("--n", type=int, required=True, help="number of transactions")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output directory for CSVs")
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--backend", choices=["closed_form", "ledger"], default="closed_form")
    p.set_defaults(func=cmd_basic)

    p = sub.add_parser("end-to-end", help="full supply-chain simulation")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.set_defaults(func=cmd_end_to_end)

    p = sub.add_parser("attack", help="benign / malicious / sleeper comparison")
    p.add_argument("--benign-p", type=float, default=0.001)
    p.add_argument(
        "--malicious-p", type=float, action="append", required=True, help="repeatable"
    )
    p.add_argument("--switch-at", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output directory for CSVs")
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--m", type=float, default=ATTACK_DECREASE_RATE)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("replay", help="re-apply an exported event stream")
    p.add_argument("--events", required=True, help="events.ndjson from simulate")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    _add_view_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("score", help="query one entity's reputation from a log")
    p.add_argument("--log", required=True, help="ledger.ndjson")
    p.add_argument("--entity", required=True)
    _add_view_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("verify-oracle", help="check a log against the brute-force oracle")
    p.add_argument("--log", required=True, help="ledger.ndjson")
    _add_view_flags(p)
    p.set_defaults(func=cmd_verify_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ChipchainError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
