#!/usr/bin/env python3
"""Repeat a reduced-scale pipeline over several seeds and tabulate the headline metrics.

    python3 scripts/seed_sweep.py --corpus data/c500 --out runs/sweep --seeds 0 1 2

Useful for judging how much A3/A4/A6-style numbers move between seeds before
spending an hour on a default-scale run.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from wordprosody.config import ExperimentConfig
from wordprosody.train import VARIANTS, run_pipeline

COLUMNS = ["seed", "mel_l1_ORA", "mel_l1_CAMP", "mel_l1_NOPROS", "gap_closed", "r2_pitch_factor",
           "r2_energy_factor", "phone_accuracy", "phone_chance", "huber_SYNTAX", "huber_EMBED", "huber_EMBED+SYNTAX"]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--stage1-steps", type=int, default=3000)
    ap.add_argument("--stage2-steps", type=int, default=2000)
    args = ap.parse_args()

    base = ExperimentConfig(corpus=args.corpus)
    rows = []
    for seed in args.seeds:
        cfg = base.replace(seed=seed, stage1=dataclasses.replace(base.stage1, steps=args.stage1_steps),
                           stage2=dataclasses.replace(base.stage2, steps=args.stage2_steps))
        res = run_pipeline(cfg, Path(args.out) / f"seed{seed}", variants=VARIANTS, main_variant="EMBED+SYNTAX")
        row = {"seed": seed, **res.report.aggregate, **res.report.probes}
        row.update({f"huber_{k}": v["huber"] for k, v in res.variant_huber.items()})
        rows.append({k: row[k] for k in COLUMNS})
    w = csv.DictWriter(sys.stdout, COLUMNS)
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})


if __name__ == "__main__":
    main()
