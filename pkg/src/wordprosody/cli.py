"""Command-line driver: ``python3 -m wordprosody <command> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wordprosody", description="Two-stage word-level prosody pipeline on a synthetic corpus.")
    p.add_argument("--dump-defaults", action="store_true", help="print the default experiment config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="render a synthetic corpus")
    g.add_argument("--spec", help="JSON synthesis spec (defaults if omitted)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)

    t1 = sub.add_parser("train-stage1", help="train the reference-encoder autoencoder")
    t1.add_argument("--corpus", required=True)
    t1.add_argument("--config")
    t1.add_argument("--out", required=True)
    t1.add_argument("--seed", type=int)

    t2 = sub.add_parser("train-stage2", help="train the context-driven prosody predictor")
    t2.add_argument("--corpus", required=True)
    t2.add_argument("--stage1", required=True)
    t2.add_argument("--streams", default="pos,class,compound,punct,embed")
    t2.add_argument("--config")
    t2.add_argument("--out", required=True)
    t2.add_argument("--seed", type=int)

    s = sub.add_parser("synth", help="synthesise a mel-spectrogram (CSV, one frame per row)")
    s.add_argument("--mode", required=True, choices=["ora", "camp", "nopros"])
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", help="file holding one sentence")
    src.add_argument("--utt", help="corpus utterance id (needs --corpus)")
    s.add_argument("--corpus")
    s.add_argument("--stage1", required=True)
    s.add_argument("--stage2")
    s.add_argument("--oracle-durations", action="store_true", help="with --utt: use the corpus durations")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)

    e = sub.add_parser("eval", help="held-out evaluation report")
    e.add_argument("--corpus", required=True)
    e.add_argument("--stage1", required=True)
    e.add_argument("--stage2", required=True)
    e.add_argument("--split", default="test", choices=["train", "val", "test"])
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int)

    c = sub.add_parser("grad-check", help="finite-difference gradient checks")
    c.add_argument("--module", choices=["numerics", "ttsmodel", "prosodypred"])
    c.add_argument("--seed", type=int, default=0)
    return p


def _config(args):
    from .config import ExperimentConfig, parse_config

    cfg = parse_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "corpus", None):
        cfg = cfg.replace(corpus=args.corpus)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _splits(cfg):
    from .corpus import list_ids, load_corpus, split_ids

    split = split_ids(list_ids(cfg.corpus), cfg.fractions, cfg.seed)
    return {k: load_corpus(cfg.corpus, ids=v) for k, v in split.items()}


def cmd_gen_data(args) -> int:
    from .synth import SynthSpec, generate_corpus

    spec = SynthSpec.load(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    generate_corpus(spec, args.out)
    print(f"wrote {spec.n_utterances} utterances to {args.out}")
    return EXIT_OK


def cmd_train_stage1(args) -> int:
    from .train import save_stage1, train_stage1

    cfg = _config(args)
    data = _splits(cfg)
    out = Path(args.out)
    res = train_stage1(cfg, data["train"], data["val"], out.with_suffix(".log.csv"))
    h = save_stage1(out, res.model, {"best_step": res.best_step, "seed": cfg.seed})
    print(f"stage-1 best step {res.best_step} val loss {res.best_val:.6f} params {h[:12]}")
    return EXIT_OK


def cmd_train_stage2(args) -> int:
    from .prosodypred import Stage2Config, parse_streams
    from .train import load_stage1, save_stage2, train_stage2

    cfg = _config(args)
    streams = parse_streams(args.streams)
    s2cfg = Stage2Config(**{**cfg.model2.to_dict(), "streams": streams})
    stage1, meta1 = load_stage1(args.stage1)
    data = _splits(cfg)
    out = Path(args.out)
    res = train_stage2(cfg, stage1, data["train"], data["val"], out.with_suffix(".log.csv"), s2cfg)
    save_stage2(out, res.model, meta1["params_hash"], Path(args.stage1).name)
    print(f"stage-2 [{','.join(streams)}] best step {res.best_step} val huber {res.best_val:.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .corpus import corpus_mel_config, load_utterance
    from .lingfront import Frontend
    from .train import load_stage1, load_stage2
    from .ttsmodel import reference_encode, synthesize

    if args.mode == "ora" and args.utt is None:
        raise UsageError("synth --mode ora needs --utt (oracle prosody is read from an utterance's audio); "
                         "text-only input has no mel to encode")
    if args.mode == "camp" and not args.stage2:
        raise UsageError("synth --mode camp needs --stage2")
    if args.utt is not None and not args.corpus:
        raise UsageError("synth --utt needs --corpus")
    if args.oracle_durations and args.utt is None:
        raise UsageError("--oracle-durations needs --utt")
    stage1, _ = load_stage1(args.stage1)
    fe = Frontend.default()
    durs = None
    if args.utt is not None:
        utt = load_utterance(args.corpus, args.utt, fe, corpus_mel_config(args.corpus))
        phones, feats = utt.phones, utt.features
        if args.oracle_durations:
            durs = utt.durations
    else:
        _, phones, feats = fe.analyse(Path(args.text).read_text())
    n_units = len(phones.units())
    if args.mode == "ora":
        prosody = reference_encode(stage1, utt.mel, utt.phones, utt.durations, utt.seg)
    elif args.mode == "camp":
        stage2, _ = load_stage2(args.stage2, stage1)
        prosody = stage2.predict_prosody(feats, mode="free")
    else:
        prosody = np.zeros((n_units, stage1.cfg.prosody_dim))
    mel, _ = synthesize(stage1, phones, prosody, durs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, mel, delimiter=",", fmt="%.6f")
    print(f"wrote {mel.shape[0]} x {mel.shape[1]} mel frames to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import evaluate, load_stage1, load_stage2

    cfg = _config(args)
    data = _splits(cfg)
    if not data[args.split]:
        raise RuntimeError(f"split {args.split!r} is empty")
    stage1, _ = load_stage1(args.stage1)
    stage2, _ = load_stage2(args.stage2, stage1)
    report = evaluate(stage1, stage2, data[args.split], data["train"], cfg.seed)
    report.save(args.out)
    print(report.ordering_line())
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .gradsuite import run_checks

    failed = 0
    for name, rep in run_checks(args.module, args.seed):
        print(f"{name}: {rep}")
        failed += not rep.passed
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-stage1": cmd_train_stage1,
    "train-stage2": cmd_train_stage2,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.dump_defaults:
            from .config import ExperimentConfig, dump_config

            sys.stdout.write(dump_config(ExperimentConfig()))
            return EXIT_OK
        if args.command is None:
            raise UsageError("a command is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage() + f"error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # runtime failures end with exit 1 and a one-line reason
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


def main() -> None:
    sys.exit(run())
