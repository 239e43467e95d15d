"""Command-line interface.

Subcommands: watertight, compare, sample, validate. Every flag maps to one
PipelineConfig field; precedence is defaults < --config file < US_* env
vars < explicit flags. Exit codes: 0 success, 1 any mesh failed or not
watertight, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from .pipeline import (ConfigError, PipelineConfig, run_compare, run_sample,
                       run_validate, run_watertight)

ENV_PREFIX = "US_"

# flag name -> (config field, type)
_FLAGS: dict[str, tuple[str, type]] = {
    "resolution": ("resolution", int),
    "method": ("method", str),
    "tau-close": ("tau_close", float),
    "thicken-delta": ("thicken_delta", float),
    "epsilon": ("epsilon", float),
    "rays": ("rays", int),
    "margin": ("margin", float),
    "extract-res": ("extract_res", int),
    "keep-largest": ("keep_largest", bool),
    "n-uniform": ("n_uniform", int),
    "n-sharp": ("n_sharp", int),
    "sharp-angle": ("sharp_angle", float),
    "n-near": ("n_near", int),
    "near-sigmas": ("near_sigmas", list),
    "n-free": ("n_free", int),
    "probe-eps": ("probe_eps", float),
    "seed": ("seed", int),
    "threads": ("threads", int),
    "report": ("report", str),
    "out-dir": ("out_dir", str),
}

_HELP = {
    "resolution": "voxel resolution N (power of two)",
    "method": "sign resolution strategy: watershed|floodfill|pseudo-sdf|visibility",
    "tau-close": "hole closing radius in voxels",
    "thicken-delta": "open-surface half thickness in voxels (< 0.5 disables)",
    "epsilon": "pseudo-SDF offset in voxels",
    "rays": "visibility voting ray count (>= 6)",
    "margin": "normalization margin inside [-1,1]^3",
    "extract-res": "marching cubes resolution (0: same as --resolution)",
    "keep-largest": "keep only the largest-volume output component",
    "n-uniform": "uniform surface sample count",
    "n-sharp": "sharp-edge surface sample count",
    "sharp-angle": "dihedral angle threshold in degrees for sharp edges",
    "n-near": "near-surface supervision sample count",
    "near-sigmas": "comma-separated Gaussian offset scales (empty: h,4h)",
    "n-free": "free-space supervision sample count",
    "probe-eps": "thin-shell probe offset (0: 2h of the extraction grid)",
    "seed": "RNG seed",
    "threads": "worker threads (0: all cores)",
    "report": "report path (default: OUT_DIR/report.jsonl)",
    "out-dir": "output directory",
}


def _parse_value(raw: str, kind: type):
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if kind is list:
        raw = raw.strip()
        return [float(tok) for tok in raw.split(",") if tok] if raw else []
    return kind(raw)


def _add_flags(parser: argparse.ArgumentParser) -> None:
    defaults = PipelineConfig()
    parser.add_argument("--config", default=None, metavar="JSON",
                        help="config file; flags and US_* env vars override it")
    for flag, (attr, kind) in _FLAGS.items():
        default = getattr(defaults, attr)
        shown = ",".join(str(v) for v in default) if isinstance(default, list) else default
        help_text = f"{_HELP[flag]} (default: {shown!r})"
        if kind is bool:
            parser.add_argument(f"--{flag}", dest=attr, action="store_const",
                                const=True, default=None, help=help_text)
        elif kind is list:
            parser.add_argument(f"--{flag}", dest=attr, default=None,
                                metavar="V[,V...]", help=help_text)
        else:
            parser.add_argument(f"--{flag}", dest=attr, type=str, default=None,
                                help=help_text)


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge defaults, config file, environment and explicit flags."""
    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        config = PipelineConfig()
    for flag, (attr, kind) in _FLAGS.items():
        env_name = ENV_PREFIX + attr.upper()
        if env_name in os.environ:
            try:
                setattr(config, attr, _parse_value(os.environ[env_name], kind))
            except ValueError as exc:
                raise ConfigError(f"bad {env_name}: {exc}") from None
        raw = getattr(args, attr, None)
        if raw is not None:
            try:
                value = raw if isinstance(raw, bool) else _parse_value(str(raw), kind)
            except ValueError as exc:
                raise ConfigError(f"bad --{flag}: {exc}") from None
            setattr(config, attr, value)
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="watervox",
        description="Watertight remeshing and 3D training-data curation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("watertight", "repair one mesh or a directory of meshes"),
        ("compare", "run all four sign strategies on one mesh"),
        ("sample", "emit surface and supervision sample files"),
        ("validate", "report watertightness and thin-shell metrics"),
    ):
        p = sub.add_parser(name, help=doc, description=doc)
        p.add_argument("input", help="mesh file" +
                       (" or directory" if name == "watertight" else ""))
        _add_flags(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s",
                        stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "watertight":
            code, entries = run_watertight(config, args.input)
            done = sum(1 for e in entries if e["status"] == "ok")
            logging.getLogger("watervox").info(
                "%d/%d meshes processed", done, len(entries))
            return code
        if args.command == "compare":
            code, table = run_compare(config, args.input)
            print(json.dumps(table, indent=2, sort_keys=True))
            return code
        if args.command == "sample":
            code, info = run_sample(config, args.input)
            if info:
                print(json.dumps(info, indent=2, sort_keys=True))
            return code
        if args.command == "validate":
            code, _ = run_validate(config, args.input)
            return code
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
