"""The experiment families and result serialization.

Each driver expands a ScenarioConfig into a grid of RunSpecs, executes
them, and folds the outcomes into one bundle: per-broadcast rows for
the CSV, aggregated per-cell statistics for the summary JSON. Row and
cell order follow the configured variant/redundancy/repeat order, so a
bundle serializes to identical bytes on every rerun of the same
(config, seed).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..errors import ConfigurationError
from ..metrics import coverage_percent, honest_coverage_percent
from .config import ScenarioConfig, config_as_dict
from .runner import RunResult, RunSpec, broadcast_count, execute_run

CSV_HEADER = ("seq", "initiator", "variant", "beta", "latency_us", "complete", "received")


def _percentile(sorted_values: list[int], q: float) -> int | None:
    """Nearest-rank percentile of pre-sorted data."""
    if not sorted_values:
        return None
    rank = max(1, math.ceil(len(sorted_values) * q / 100.0))
    return sorted_values[rank - 1]


def _spec_for(cfg: ScenarioConfig, variant: str, redundancy: int, repeat: int, **extra) -> RunSpec:
    return RunSpec(
        n_nodes=cfg.n_nodes,
        variant=variant,
        redundancy=redundancy,
        rounds_per_node=cfg.rounds_per_node,
        interval_us=cfg.interval_ms * 1000,
        seed=cfg.seed,
        repeat=repeat,
        address_bits=cfg.address_bits,
        bucket_capacity=cfg.bucket_capacity,
        data_msg_bytes=cfg.data_msg_bytes,
        confirm_msg_bytes=cfg.confirm_msg_bytes,
        disturbance=cfg.disturbance,
        disturbance_period_us=cfg.disturbance_period_s * 1_000_000,
        refuse_withholds_confirms=cfg.refuse_withholds_confirmations,
        horizon_us=None if cfg.horizon_s is None else cfg.horizon_s * 1_000_000,
        **extra,
    )


def _cell(
    cfg: ScenarioConfig,
    variant: str,
    redundancy: int,
    results: list[RunResult],
    honest_denominator: bool,
) -> dict:
    rounds = broadcast_count(results[0].spec)
    coverage = coverage_percent([r.received_total for r in results], rounds, cfg.n_nodes)
    honest_cov = None
    if honest_denominator:
        honest_cov = honest_coverage_percent(
            [r.honest_received_total for r in results],
            rounds,
            [r.honest_nodes for r in results],
        )
    latencies = sorted(
        row[2] for r in results for row in r.rows if row[2] is not None
    )
    incomplete = sum(1 for r in results for row in r.rows if row[2] is None)
    return {
        "variant": variant,
        "beta": redundancy,
        "disturbance": cfg.disturbance,
        "repeats": len(results),
        "broadcasts_per_repeat": rounds,
        "coverage_pct": round(coverage, 4),
        "unreceived_pct": round(100.0 - coverage, 4),
        "honest_coverage_pct": None if honest_cov is None else round(honest_cov, 4),
        "latency": {
            "complete": len(latencies),
            "incomplete": incomplete,
            "p50_us": _percentile(latencies, 50),
            "p90_us": _percentile(latencies, 90),
            "p99_us": _percentile(latencies, 99),
        },
        "transmissions": {
            "data": sum(r.data_sends for r in results),
            "confirmation": sum(r.confirm_sends for r in results),
            "confirmation_bytes": cfg.confirm_msg_bytes
            * sum(r.confirm_sends for r in results),
            "failed_sends": sum(r.failed_sends for r in results),
            "dropped_offline": sum(r.dropped_offline for r in results),
        },
        "truncated": any(r.truncated for r in results),
    }


def _rows(variant: str, redundancy: int, results: list[RunResult]) -> list[tuple]:
    out = []
    for repeat_index, result in enumerate(results):
        base = repeat_index * broadcast_count(result.spec)
        for seq, initiator, lat, complete, received in result.rows:
            out.append((base + seq, initiator, variant, redundancy, lat, complete, received))
    return out


def _grid(cfg: ScenarioConfig, variants, redundancies, honest_denominator=False, **extra):
    """Run the full (variant, redundancy, repeat) grid of a scenario."""
    cells = []
    rows = []
    for variant in variants:
        for redundancy in redundancies:
            results = [
                execute_run(_spec_for(cfg, variant, redundancy, repeat, **extra))
                for repeat in range(cfg.repeats)
            ]
            cells.append(_cell(cfg, variant, redundancy, results, honest_denominator))
            rows.extend(_rows(variant, redundancy, results))
    return cells, rows


def _bundle(cfg: ScenarioConfig, cells: list[dict], rows: list[tuple], **metadata) -> dict:
    meta = {
        "initiator_counts_self": True,
        "times": "microseconds",
        "percentile_method": "nearest-rank",
        "coverage_denominator": "broadcasts * repeats * n_nodes",
        "honest_coverage_denominator": "broadcasts * sum(honest nodes per repeat)",
    }
    meta.update(metadata)
    return {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "config": config_as_dict(cfg),
        "metadata": meta,
        "cells": cells,
        "rows": rows,
    }


def run_latency(cfg: ScenarioConfig) -> dict:
    """Fault-free latency comparison across betas and variants."""
    cells, rows = _grid(cfg, cfg.variants, cfg.betas)
    return _bundle(cfg, cells, rows)


def run_coverage(cfg: ScenarioConfig) -> dict:
    """Coverage under churn or refusal, per (variant, beta)."""
    honest = cfg.disturbance == "refuse_half"
    cells, rows = _grid(cfg, cfg.variants, cfg.betas, honest_denominator=honest)
    return _bundle(cfg, cells, rows)


def run_gossip_sweep(cfg: ScenarioConfig) -> dict:
    """Mean gossip coverage per fanout, plus one flooding check cell.

    The gossip graph reuses each node's bootstrap routing-table
    contents as a static neighbor list. The flooding cell runs with
    fanout n_nodes - 1 (met by every degree) over a reduced broadcast
    count, since one pass suffices to show the 100% limit.
    """
    cells, rows = _grid(cfg, ("gossip",), cfg.fanouts)
    if cfg.flood_check_broadcasts > 0:
        flood_fanout = cfg.n_nodes - 1
        spec = _spec_for(
            cfg,
            "gossip",
            flood_fanout,
            repeat=0,
            total_broadcasts=cfg.flood_check_broadcasts,
        )
        result = execute_run(spec)
        flood_cell = _cell(cfg, "gossip", flood_fanout, [result], False)
        flood_cell["flooding"] = True
        cells.append(flood_cell)
        rows.extend(_rows("gossip", flood_fanout, [result]))
    return _bundle(cfg, cells, rows, gossip_graph="bootstrap-routing-tables")


def run_faultfree_audit(cfg: ScenarioConfig) -> dict:
    """Delivery invariants on a static fault-free network.

    Checks, per variant at the configured beta: every broadcast
    completes, coverage is exactly 100%, and at beta=1 each broadcast
    costs exactly n_nodes - 1 data transmissions (for the baseline,
    with zero duplicate deliveries on top).
    """
    checks = []
    cells = []
    rows = []
    for variant in cfg.variants:
        for beta in cfg.betas:
            results = [
                execute_run(
                    _spec_for(cfg, variant, beta, repeat, count_per_hash=True)
                )
                for repeat in range(cfg.repeats)
            ]
            cells.append(_cell(cfg, variant, beta, results, False))
            rows.extend(_rows(variant, beta, results))
            label = f"{variant} beta={beta}"
            complete = all(row[3] for r in results for row in r.rows)
            checks.append(
                {
                    "name": f"all broadcasts complete [{label}]",
                    "passed": complete,
                    "detail": f"{sum(1 for r in results for row in r.rows if row[3])}"
                    f"/{sum(len(r.rows) for r in results)} complete",
                }
            )
            cov = coverage_percent(
                [r.received_total for r in results],
                broadcast_count(results[0].spec),
                cfg.n_nodes,
            )
            checks.append(
                {
                    "name": f"coverage is 100% [{label}]",
                    "passed": cov == 100.0,
                    "detail": f"coverage {cov:.4f}%",
                }
            )
            if beta == 1:
                expected = cfg.n_nodes - 1
                off_target = 0
                tallied = 0
                for r in results:
                    counts = r.per_hash_sends or {}
                    tallied += len(counts)
                    off_target += sum(1 for c in counts.values() if c != expected)
                checks.append(
                    {
                        "name": f"data transmissions per broadcast = N-1 [{label}]",
                        "passed": off_target == 0
                        and tallied == sum(len(r.rows) for r in results),
                        "detail": f"{off_target} broadcasts off target of {expected}",
                    }
                )
                if variant == "baseline":
                    dups = sum(r.duplicates for r in results)
                    checks.append(
                        {
                            "name": f"zero duplicate deliveries [{label}]",
                            "passed": dups == 0,
                            "detail": f"{dups} duplicates",
                        }
                    )
    bundle = _bundle(cfg, cells, rows)
    bundle["checks"] = checks
    return bundle


def run_scenario(cfg: ScenarioConfig) -> dict:
    if cfg.scenario == "latency":
        return run_latency(cfg)
    if cfg.scenario in ("coverage_offline", "coverage_refuse"):
        return run_coverage(cfg)
    if cfg.scenario == "gossip_sweep":
        return run_gossip_sweep(cfg)
    if cfg.scenario == "faultfree_audit":
        return run_faultfree_audit(cfg)
    raise ConfigurationError(f"no driver for scenario {cfg.scenario!r}")


def emit_results(bundle: dict, out_dir: str | Path) -> tuple[Path, Path]:
    """Write broadcasts.csv and summary.json; byte-stable per (config, seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "broadcasts.csv"
    json_path = out / "summary.json"

    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for seq, initiator, variant, beta, lat, complete, received in bundle["rows"]:
            writer.writerow(
                (
                    seq,
                    initiator,
                    variant,
                    beta,
                    "" if lat is None else lat,
                    "true" if complete else "false",
                    received,
                )
            )

    summary = {key: bundle[key] for key in bundle if key != "rows"}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
