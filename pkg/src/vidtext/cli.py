"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 config error, 3 I/O error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, NumericError, VidTextError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4

logger = logging.getLogger("vidtext")


def _print_json(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- synth ------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .data.synthetic import generate_synthetic_corpus

    path = generate_synthetic_corpus(
        args.out, seed=args.seed, n_items=args.items, frames_per_item=args.frames,
        image_dims=(args.channels, args.height, args.width), caption_len=args.caption_len,
        n_classes=args.classes, noise=args.noise)
    print(path)
    return EXIT_OK


# -- train ------------------------------------------------------------------------

def _train_overrides(args) -> dict:
    o: dict = {}
    if args.corpus:
        o.setdefault("paths", {})["corpus"] = args.corpus
    if args.run_dir:
        o.setdefault("paths", {})["run_dir"] = args.run_dir
    if args.epochs is not None:
        o["epochs"] = args.epochs
    if args.seed is not None:
        o["seed"] = args.seed
    if args.batch_size is not None:
        o["batch_size"] = args.batch_size
    if args.calculator:
        o.setdefault("calculator", {})["kind"] = args.calculator
    if args.projection:
        o.setdefault("encoder", {})["projection_mode"] = args.projection
    return o


def run_paths(cfg, config_path: Optional[str] = None) -> dict:
    if not cfg.paths.corpus:
        raise ConfigError("no corpus manifest given (paths.corpus or --corpus)")
    if cfg.paths.run_dir:
        run_dir = Path(cfg.paths.run_dir)
    elif config_path:
        run_dir = Path(config_path).parent / "run"
    else:
        raise ConfigError("no run directory given (paths.run_dir or --run-dir)")
    return {
        "run_dir": run_dir,
        "checkpoint": Path(cfg.paths.checkpoint) if cfg.paths.checkpoint else run_dir / "checkpoint.vtck",
        "log": Path(cfg.paths.log) if cfg.paths.log else run_dir / "train_log.jsonl",
        "config": run_dir / "config.json",
    }


def cmd_train(args) -> int:
    from .config import load_config, parse_config
    from .data.corpus import load_corpus
    from .model import build_model
    from .training.checkpoint import save_checkpoint
    from .training.loop import params_to_arrays, train

    overrides = _train_overrides(args)
    cfg = load_config(args.config, overrides) if args.config else parse_config({}, overrides)
    paths = run_paths(cfg, args.config)
    corpus = load_corpus(cfg.paths.corpus, cfg.sampling_config())
    model = build_model(cfg.encoder_config(), cfg.calculator_config(), seed=cfg.seed)
    # fail fast on shape mismatches before any step runs
    enc = model.encoder
    for it in corpus:
        T, C, H, W = it.clip.frames.shape
        if C != enc.channels or (H, W) != tuple(enc.image_size):
            raise DimensionError(f"corpus item {it.id} has frames {C}x{H}x{W}, model expects "
                                 f"{enc.channels}x{enc.image_size[0]}x{enc.image_size[1]}")
        it.caption.validate(enc)

    paths["run_dir"].mkdir(parents=True, exist_ok=True)
    paths["config"].write_text(cfg.to_json(), encoding="utf-8")
    with open(paths["log"], "w", encoding="utf-8") as log_fh:
        def on_step(rec):
            log_fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if rec["step"] % 25 == 0:
                logger.info("step %d  L=%.6f", rec["step"], rec["L"])
        result = train(model, corpus, cfg.train_config(), on_step=on_step)
    ckpt_cfg = {"model": model.config_dict(), "sampling": cfg.sampling_config().to_dict()}
    save_checkpoint(paths["checkpoint"], params_to_arrays(model.params), ckpt_cfg)
    last = result.log[-1] if result.log else None
    _print_json({"checkpoint": str(paths["checkpoint"]), "log": str(paths["log"]), "steps": result.total_steps,
                 "final_L": last["L"] if last else None})
    return EXIT_OK


# -- eval -------------------------------------------------------------------------

def load_model_checkpoint(path):
    from .model import model_from_dict
    from .numerics import Tensor
    from .training.checkpoint import load_checkpoint

    arrays, cfg = load_checkpoint(path)
    if "model" not in cfg:
        raise FormatError("checkpoint header carries no model config", path=str(path))
    params = {k: Tensor(v) for k, v in arrays.items()}
    model = model_from_dict(cfg["model"], params)
    return model, cfg


def cmd_eval(args) -> int:
    from .data.corpus import load_corpus
    from .data.sampling import SamplingConfig
    from .data.tensorio import write_tensor_file
    from .evaluation import evaluate

    if not Path(args.checkpoint).exists():
        raise FileNotFoundError(f"checkpoint {args.checkpoint} not found")
    if not Path(args.corpus).exists():
        raise FileNotFoundError(f"corpus manifest {args.corpus} not found")
    model, cfg = load_model_checkpoint(args.checkpoint)
    sampling = SamplingConfig(**cfg.get("sampling", {}))
    directions = [d.strip() for d in args.directions.split(",") if d.strip()]
    ks = tuple(int(k) for k in args.ks.split(","))
    corpus = load_corpus(args.corpus, sampling)
    enc = model.encoder
    for it in corpus:
        T, C, H, W = it.clip.frames.shape
        if C != enc.channels or (H, W) != tuple(enc.image_size):
            raise DimensionError(f"corpus frames {C}x{H}x{W} do not match checkpoint "
                                 f"{enc.channels}x{enc.image_size[0]}x{enc.image_size[1]}")
    reports, S = evaluate(model, corpus, directions, ks=ks, batch_size=args.batch_size)
    doc = [reports[d].to_dict() for d in directions]
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "metrics.json"
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.dump_matrix:
        write_tensor_file(args.dump_matrix, S.astype(np.float32))
    _print_json(doc)
    return EXIT_OK


# -- gradcheck ----------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    from .checks import run_gradcheck

    report = run_gradcheck(args.calculator, args.projection, seed=args.seed, max_entries=args.max_entries or None,
                           eps=args.eps, tol=args.tol, corrupt=args.corrupt_grad)
    worst = report.worst
    summary = {"calculator": args.calculator, "projection": args.projection, "seed": args.seed,
               "pass": report.passed, "n_params": len(report.params),
               "worst": {"name": worst.name, "max_rel_err": worst.max_rel_err,
                         "max_abs_err": worst.max_abs_err} if worst else None}
    if args.verbose:
        summary["report"] = report.to_dict()
    _print_json(summary)
    if not report.passed:
        print(f"gradient check FAILED; worst parameter: {worst.name}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vidtext", description="Video-text retrieval: synth, train, eval, gradcheck")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic paired corpus")
    s.add_argument("--seed", type=int, default=17)
    s.add_argument("--items", type=int, default=32)
    s.add_argument("--frames", type=int, default=12)
    s.add_argument("--out", required=True)
    s.add_argument("--channels", type=int, default=3)
    s.add_argument("--height", type=int, default=16)
    s.add_argument("--width", type=int, default=16)
    s.add_argument("--caption-len", type=int, default=16)
    s.add_argument("--classes", type=int, default=None)
    s.add_argument("--noise", type=float, default=0.1)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model from a JSON run config")
    t.add_argument("--config")
    t.add_argument("--corpus")
    t.add_argument("--run-dir")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--calculator", choices=["meanP", "seqLSTM", "seqTransf", "tightTransf"])
    t.add_argument("--projection", choices=["2d", "3d"])
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="retrieval metrics of a checkpoint on a corpus")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--directions", default="t2v,v2t")
    e.add_argument("--ks", default="1,5,10")
    e.add_argument("--out")
    e.add_argument("--dump-matrix")
    e.add_argument("--batch-size", type=int)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    g.add_argument("--calculator", default="meanP", choices=["meanP", "seqLSTM", "seqTransf", "tightTransf"])
    g.add_argument("--projection", default="2d", choices=["2d", "3d"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-entries", type=int, default=8, help="entries probed per tensor; 0 = all")
    g.add_argument("--eps", type=float, default=1e-6)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--corrupt-grad", action="store_true", help="double the analytic gradient (detector sanity)")
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DimensionError, VidTextError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
