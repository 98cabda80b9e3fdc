#!/usr/bin/env python3
"""Reproduce the headline algorithm comparisons on the bundled scenarios.

Runs each comparison over multiple seeds, prints a summary table, and writes
seed-level metrics plus comparison JSON files to the output directory.

Usage:
    python3 scripts/run_comparisons.py [--out results] [--seeds N] [--quick]
"""

import argparse
import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from coopnav.config import bundled_scenario_path, load_scenario
from coopnav.harness import compare, replicate, reports_csv, summary_json


def heading(text):
    print(f"\n=== {text} ===", flush=True)


def save(out: Path, name: str, text: str) -> None:
    path = out / name
    path.write_text(text)
    print(f"  wrote {path}")


def inference_comparison(out: Path, seeds, quick=False):
    heading("single_floor_inference: filtered inference vs per-epoch least squares")
    scen = load_scenario(bundled_scenario_path("single_floor_inference"))
    if quick:
        scen = dataclasses.replace(scen, duration_s=20.0)
    c = compare(scen, "LS-AL-UN", "BP-AL-UN", seeds=seeds, node_id=10)
    print(
        f"  median RMSE: LS {c.baseline_rmse_m:.3f} m -> BP {c.candidate_rmse_m:.3f} m"
        f"  ({c.rmse_change_pct:+.1f}%)"
    )
    save(out, "inference_vs_ls.json", summary_json(c))


def cooperation_comparison(out: Path, seeds, quick=False):
    heading("two_agent_cooperation: peer ranging for a two-anchor agent")
    scen = load_scenario(bundled_scenario_path("two_agent_cooperation"))
    if quick:
        scen = dataclasses.replace(scen, duration_s=30.0)
    solo = dataclasses.replace(
        scen,
        parameters=dataclasses.replace(scen.parameters, allow_agent_measurements=False),
    )
    _, coop = replicate(scen, seeds, node_id=11)
    _, non = replicate(solo, seeds, node_id=11)
    coop_eth = float(np.median([r.e_th_80_m for r in coop]))
    solo_eth = float(np.median([r.e_th_80_m for r in non]))
    print(
        f"  e_th@20% outage: anchors-only {solo_eth:.3f} m -> cooperative {coop_eth:.3f} m"
        f"  ({(coop_eth - solo_eth) / solo_eth * 100:+.1f}%)"
    )
    save(out, "cooperation_seed_metrics.csv", reports_csv(list(coop) + list(non)))
    save(
        out,
        "cooperation.json",
        json.dumps(
            {
                "scenario": scen.name,
                "seeds": list(seeds),
                "cooperative_e_th_m": coop_eth,
                "anchors_only_e_th_m": solo_eth,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )


def activation_comparison(out: Path, seeds, quick=False):
    heading("three_agent_activation: threshold activation vs carrier sensing")
    scen = load_scenario(bundled_scenario_path("three_agent_activation"))
    if quick:
        scen = dataclasses.replace(scen, duration_s=15.0)
        scen = dataclasses.replace(
            scen, parameters=dataclasses.replace(scen.parameters, metrics_burn_in_s=5.0)
        )
    c = compare(scen, "BP-CS-UN", "BP-HT-UN", seeds=seeds)
    print(
        f"  measurement rate: CSMA {c.baseline_rate_hz:.0f}/s -> threshold "
        f"{c.candidate_rate_hz:.0f}/s ({c.rate_change_pct:+.1f}%)"
    )
    print(
        f"  median RMSE: CSMA {c.baseline_rmse_m:.3f} m vs threshold "
        f"{c.candidate_rmse_m:.3f} m"
    )
    save(out, "activation.json", summary_json(c))


def prioritization_comparison(out: Path, seeds, quick=False):
    heading("prioritization_multipath: allocation vs uniform under degraded links")
    scen = load_scenario(bundled_scenario_path("prioritization_multipath"))
    if quick:
        scen = dataclasses.replace(scen, duration_s=15.0)
    results, cp_reports = replicate(scen, seeds, node_id=10)
    _, un_reports = replicate(scen.with_algorithms("BP-AL-UN"), seeds, node_id=10)
    ratios = []
    for r in results:
        los = sum(v for (_, n), v in r.link_counts.items() if n in {1, 3, 5, 6})
        nlos = sum(v for (_, n), v in r.link_counts.items() if n in {2, 4})
        ratios.append(los / max(nlos, 1))
    print(f"  clean:degraded measurement ratio (median): {np.median(ratios):.1f}:1")
    print(
        f"  median RMSE: allocation {np.median([x.rmse_m for x in cp_reports]):.3f} m"
        f" vs uniform {np.median([x.rmse_m for x in un_reports]):.3f} m"
    )
    save(out, "prioritization_seed_metrics.csv", reports_csv(cp_reports))


def multi_floor_comparison(out: Path, seeds, quick=False):
    heading("multi_floor: allocation vs uniform across a floor change")
    scen = load_scenario(bundled_scenario_path("multi_floor"))
    if quick:
        scen = dataclasses.replace(scen, duration_s=30.0)
    c = compare(scen, "BP-HT-UN", "BP-HT-CP", seeds=seeds, node_id=10)
    print(
        f"  e_th@20% outage: uniform {c.baseline_e_th_m:.3f} m -> allocation "
        f"{c.candidate_e_th_m:.3f} m ({c.e_th_change_pct:+.1f}%)"
    )
    save(out, "multi_floor.json", summary_json(c))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--seeds", type=int, default=10, help="seeds per comparison")
    ap.add_argument(
        "--quick", action="store_true", help="shorter runs for a fast smoke pass"
    )
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = range(args.seeds)

    t0 = time.perf_counter()
    inference_comparison(out, seeds, args.quick)
    cooperation_comparison(out, seeds, args.quick)
    activation_comparison(out, seeds, args.quick)
    prioritization_comparison(out, seeds, args.quick)
    multi_floor_comparison(out, seeds, args.quick)
    print(f"\ndone in {time.perf_counter() - t0:.1f}s; outputs in {out}/")


if __name__ == "__main__":
    main()
