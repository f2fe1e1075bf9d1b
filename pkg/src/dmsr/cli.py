"""Command-line entry point: train / eval / infer / synth-data / grad-check."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, config_hash, load_run_config, to_dict

EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dmsr", description="dual-domain multi-scale deraining")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a paired dataset")
    p.add_argument("--config", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a paired dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)

    p = sub.add_parser("infer", help="derain a single image")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic rain dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--config", required=True)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=8,
                   help="sampled coordinates per parameter tensor")
    return parser


def _load_config(path: str) -> RunConfig:
    if not Path(path).is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_MISSING_FILE)
    try:
        cfg = load_run_config(path)
    except (ConfigError, json.JSONDecodeError) as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)
    seed_override = os.environ.get("DMSR_SEED")
    if seed_override is not None:
        cfg.train.seed = int(seed_override)
    print(json.dumps(to_dict(cfg), indent=2, sort_keys=True))
    print(f"config_hash: {config_hash(cfg)}")
    return cfg


def _require_file(path: str) -> None:
    if not Path(path).exists():
        print(f"error: not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_MISSING_FILE)


def _cmd_train(args) -> int:
    from .data import load_image, scan_pair_dataset
    from .model import DMSRNet
    from .train import train_loop

    cfg = _load_config(args.config)
    _require_file(cfg.data_root)
    pairs = [(load_image(r), load_image(g))
             for r, g in scan_pair_dataset(cfg.data_root)]
    if not pairs:
        print("error: empty dataset", file=sys.stderr)
        return EXIT_MISSING_FILE
    import torch
    torch.manual_seed(cfg.train.seed)
    model = DMSRNet(cfg.model)
    reports = train_loop(model, pairs, cfg.model, cfg.train, cfg.out_dir)
    print(f"trained {len(reports)} steps; final loss {reports[-1].total_value:.6f}")
    print(f"checkpoint: {Path(cfg.out_dir) / 'ckpt_final'}")
    return 0


def _load_model(ckpt: str):
    from .checkpoint import apply_weights, load_weights
    from .model import DMSRNet

    _require_file(ckpt)
    tensors, model_cfg = load_weights(ckpt)
    model = DMSRNet(model_cfg)
    apply_weights(model, tensors)
    return model, model_cfg


def _cmd_eval(args) -> int:
    from .inference import evaluate_dataset

    cfg = _load_config(args.config)
    _require_file(cfg.data_root)
    model, model_cfg = _load_model(args.ckpt)
    report = evaluate_dataset(model, model_cfg, cfg.data_root,
                              cfg.tile, cfg.overlap, cfg.out_dir)
    print(f"images: {len(report.per_image)}  mean_psnr_db: {report.mean_psnr_db}"
          f"  mean_ssim: {report.mean_ssim:.4f}")
    return 0


def _cmd_infer(args) -> int:
    from .data import load_image, save_image
    from .inference import sliding_window_infer

    cfg = _load_config(args.config)
    _require_file(args.input)
    model, _ = _load_model(args.ckpt)
    out = sliding_window_infer(model, load_image(args.input), cfg.tile, cfg.overlap)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    save_image(out, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_synth_data(args) -> int:
    from .data import make_synthetic_dataset

    resolved = {"out": args.out, "count": args.count, "seed": args.seed}
    print(json.dumps(resolved, indent=2, sort_keys=True))
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    import hashlib
    print(f"config_hash: {hashlib.sha256(blob.encode()).hexdigest()[:16]}")
    make_synthetic_dataset(args.out, args.count, args.seed)
    print(f"wrote {args.count} pairs to {args.out}")
    return 0


def _cmd_grad_check(args) -> int:
    from .gradcheck import grad_check

    cfg = _load_config(args.config)
    report = grad_check(cfg.model, tolerance=args.tolerance,
                        seed=cfg.train.seed, num_coords=args.coords)
    print(f"max_rel_err: {report.max_rel_err:.3e} "
          f"({'pass' if report.passed else 'FAIL'})")
    if not report.passed:
        for line in report.failures[:20]:
            print(f"  {line}", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "synth-data": _cmd_synth_data,
    "grad-check": _cmd_grad_check,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
