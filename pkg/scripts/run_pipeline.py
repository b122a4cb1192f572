#!/usr/bin/env python3
"""Full experiment: render a corpus, train both stages and all ablation variants, evaluate.

    python3 scripts/run_pipeline.py --out runs/default
    python3 scripts/run_pipeline.py --out runs/quick --stage1-steps 3000 --stage2-steps 2000

Writes checkpoints, CSV training logs and report/{report.json,utterances.csv}
under --out, then prints the acceptance-relevant numbers.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import time
from pathlib import Path

from wordprosody.config import ExperimentConfig, parse_config
from wordprosody.synth import SynthSpec, generate_corpus
from wordprosody.train import VARIANTS, run_pipeline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--corpus", help="existing corpus directory (rendered into OUT/corpus if omitted)")
    ap.add_argument("--n-utterances", type=int, default=500)
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--stage1-steps", type=int)
    ap.add_argument("--stage2-steps", type=int)
    ap.add_argument("--variants", default="EMBED+SYNTAX,SYNTAX,EMBED",
                    help="comma list of ablation variants; the first drives the CAMP system")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.stage1_steps:
        cfg = cfg.replace(stage1=dataclasses.replace(cfg.stage1, steps=args.stage1_steps))
    if args.stage2_steps:
        cfg = cfg.replace(stage2=dataclasses.replace(cfg.stage2, steps=args.stage2_steps))
    corpus = Path(args.corpus) if args.corpus else out / "corpus"
    if not args.corpus:
        generate_corpus(SynthSpec(n_utterances=args.n_utterances), corpus)
    cfg = cfg.replace(corpus=str(corpus))

    names = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        ap.error(f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    t0 = time.time()
    res = run_pipeline(cfg, out, variants={v: VARIANTS[v] for v in names})
    rep = res.report
    print(rep.ordering_line())
    print(json.dumps(rep.probes, indent=1, sort_keys=True))
    for name, h in res.variant_huber.items():
        print(f"{name:>13}: huber {h['huber']:.4f} (teacher-forced {h['huber_teacher']:.4f}, mean baseline {h['huber_mean']:.4f})")
    a = rep.aggregate
    print(f"duration L1 (frames) ORA {a['dur_l1_ORA']:.4f} CAMP {a['dur_l1_CAMP']:.4f} NOPROS {a['dur_l1_NOPROS']:.4f}")
    print(f"wall time {(time.time() - t0) / 60:.1f} min")


if __name__ == "__main__":
    main()
