"""Command-line entry point: ``train``, ``enhance``, ``evaluate`` and ``stats``.

Exit status is 0 on success, 1 for usage or configuration errors, 2 for
unreadable or inconsistent data (images, checkpoints) and 3 for runtime
failures such as a diverging loss.  Every failure prints one diagnostic line
to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch
import yaml

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint
from .data_io import DataError, channel_histogram, index_pairs, list_images, load_image, save_image
from .objectives import psnr, ssim
from .pipeline import SampleConfig, TrainConfig, enhance, fit, restore, schedule_for
from .quality import MetricReport, load_weights, uciqe, uiqm

__all__ = ["main", "load_run_config", "RUN_KEYS", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_RUNTIME"]

log = logging.getLogger("wavecolor")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

# Top-level keys of a training config file besides the TrainConfig fields under ``train``.
RUN_KEYS = ("degraded_dir", "reference_dir", "out_dir", "train")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_override(item: str) -> tuple[str, Any]:
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
    return key.strip(), yaml.safe_load(value)


def load_run_config(path: str | Path, overrides: Sequence[str] = ()) -> dict[str, Any]:
    """Read a training config file; relative paths resolve against its directory.

    Returns ``{"degraded_dir", "reference_dir", "out_dir", "train": TrainConfig}``.
    ``overrides`` are ``KEY=VALUE`` strings for TrainConfig fields.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a mapping")
    unknown = set(raw) - set(RUN_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key in ("degraded_dir", "reference_dir", "out_dir"):
        if key not in raw:
            raise UsageError(f"config {path} is missing {key!r}")
    train = dict(raw.get("train") or {})
    for item in overrides:
        key, value = _parse_override(item)
        train[key] = value
    try:
        cfg = TrainConfig.from_dict(train)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid train config: {exc}") from exc
    base = path.parent
    return {
        "degraded_dir": base / raw["degraded_dir"],
        "reference_dir": base / raw["reference_dir"],
        "out_dir": base / raw["out_dir"],
        "train": cfg,
    }


def _dump(obj: dict[str, Any]) -> str:
    def plain(v):
        if isinstance(v, Path):
            return str(v)
        if isinstance(v, TrainConfig | SampleConfig):
            return dataclasses.asdict(v)
        if isinstance(v, tuple):
            return list(v)
        return v

    return yaml.safe_dump({k: plain(v) for k, v in obj.items()}, sort_keys=True)


def _echo(title: str, obj: dict[str, Any]) -> None:
    print(f"# effective {title} config", file=sys.stderr)
    print(_dump(obj), file=sys.stderr, end="")


# ---- subcommands -------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    run = load_run_config(args.config, args.set)
    if args.out_dir:
        run["out_dir"] = Path(args.out_dir)
    _echo("train", run)
    out = Path(run["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(_dump(run))
    index = index_pairs(run["degraded_dir"], run["reference_dir"])
    resume = load_checkpoint(args.resume) if args.resume else None
    last = None
    for ck in fit(index, run["train"], out_dir=out, resume=resume, log_path=out / "train_log.tsv"):
        last = ck
        print(f"epoch {ck.epoch}: checkpoint written", file=sys.stderr)
    if last is None:
        print("nothing to do: checkpoint already at the configured epoch count", file=sys.stderr)
    return EXIT_OK


def cmd_enhance(args: argparse.Namespace) -> int:
    ck = load_checkpoint(args.ckpt)
    state, cfg = restore(ck)
    sample = SampleConfig(
        S=args.steps if args.steps is not None else cfg.S,
        mode="deterministic" if args.deterministic else "stochastic",
        use_gcc=not args.no_gcc,
        use_csdr=not args.no_csdr,
        seed=args.seed,
    )
    if cfg.T % sample.S:
        raise UsageError(f"--steps {sample.S} must divide T={cfg.T}")
    files = list_images(args.input)
    if not files:
        raise DataError(f"no images in {args.input}")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    effective = {"checkpoint": Path(args.ckpt), "input": Path(args.input), "output": out,
                 "train": cfg, "sample": sample}
    _echo("enhance", effective)
    (out / "enhance_config.yaml").write_text(_dump(effective))
    sched = schedule_for(cfg)
    model = state.model

    def run_one(path: Path) -> Path:
        img = load_image(path)
        # one generator per image so results do not depend on --jobs or file order
        gen = torch.Generator().manual_seed(sample.seed)
        restored = enhance(img, model, sched, sample, gen)
        dest = out / f"{path.stem}.png"
        save_image(restored, dest)
        return dest

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            written = list(pool.map(run_one, files))
    else:
        written = [run_one(p) for p in files]
    print(f"wrote {len(written)} images to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    weights = load_weights()
    report = MetricReport(weights_version=weights.get("version"),
                          config={"enhanced": str(args.enhanced),
                                  "reference": str(args.reference) if args.reference else None})
    if args.reference:
        pairs = index_pairs(args.enhanced, args.reference).entries
    else:
        pairs = [(p, None) for p in list_images(args.enhanced)]
        if not pairs:
            raise DataError(f"no images in {args.enhanced}")
    for enh_path, ref_path in pairs:
        img = load_image(enh_path)
        kw = {}
        if ref_path is not None:
            ref = load_image(ref_path)
            kw["psnr"] = psnr(img, ref)
            a = torch.from_numpy(img).permute(2, 0, 1).double()
            b = torch.from_numpy(ref).permute(2, 0, 1).double()
            kw["ssim"] = float(ssim(a, b, value_range=(0.0, 255.0)))
        report.add(enh_path.name, uciqe(img, weights), uiqm(img, weights), **kw)
    dest = Path(args.report)
    dest.parent.mkdir(parents=True, exist_ok=True)
    json_path, table_path = dest.with_suffix(".json"), dest.with_suffix(".tsv")
    report.write_json(json_path)
    report.write_table(table_path)
    for k, v in report.aggregate.items():
        print(f"{k}\t{v:.4f}")
    print(f"report written to {json_path} and {table_path}", file=sys.stderr)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    files = list_images(args.input)
    stats = channel_histogram(files, bins=args.bins)
    print("channel\tmean")
    for name, m in zip("RGB", stats.means):
        print(f"{name}\t{m:.3f}")
    if args.table:
        stats.write_table(args.table)
    if args.plot:
        stats.plot(args.plot)
    return EXIT_OK


# ---- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wavecolor", description="Wavelet-domain diffusion for underwater images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train from a YAML config")
    p.add_argument("--config", required=True, help="YAML run config")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out-dir", help="override out_dir from the config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a train field, e.g. --set epochs=10 (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="restore every image in a directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--steps", type=int, help="sampling steps S (default: from the checkpoint)")
    p.add_argument("--deterministic", action="store_true", help="no noise in the reverse steps")
    p.add_argument("--no-gcc", action="store_true", help="skip color correction")
    p.add_argument("--no-csdr", action="store_true", help="skip detail refinement")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="images processed in parallel")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score enhanced images")
    p.add_argument("--enhanced", required=True)
    p.add_argument("--reference", help="reference directory; enables PSNR and SSIM")
    p.add_argument("--report", required=True, help="report path; .json and .tsv are written")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="per-channel histograms of a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--plot", help="write a histogram figure here")
    p.add_argument("--table", help="write the histogram table here")
    p.add_argument("--bins", type=int, default=256)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    if getattr(args, "steps", None) is not None and args.steps < 1:
        parser.error("--steps must be >= 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wavecolor {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"wavecolor {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, RuntimeError, OSError, ValueError) as exc:
        print(f"wavecolor {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
