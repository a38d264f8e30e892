"""Command-line experiment runner.

Subcommands: run (execute one config, with dotted-path overrides),
preset (emit a desk-scale config family), export-trigger / import-trigger
(move optimized trigger files between runs). Relative output paths
resolve under $FEDSPA_OUTPUT_ROOT when it is set.

Exit codes: 0 ok, 2 validation error, 3 numeric error, 4 io/format error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import attacks, config as cfg_mod, federation
from .errors import ConfigError, DataFormatError, NumericError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

OUTPUT_ROOT_ENV = "FEDSPA_OUTPUT_ROOT"


def _resolve_out(path_text: str | None) -> Path | None:
    if path_text is None:
        return None
    path = Path(path_text)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _cmd_run(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = cfg_mod.load_yaml(fh.read())
    raw = cfg_mod.apply_overrides(raw, args.overrides)
    config = cfg_mod.parse_raw(raw)
    if args.dry_run:
        sys.stdout.write(cfg_mod.dump_yaml(config.echo))
        return EXIT_OK
    report = federation.run_experiment(config)
    out_dir = _resolve_out(args.out if args.out is not None else config.output.dir)
    if out_dir is not None:
        federation.write_artifacts(report, config, out_dir)
    final = report.final
    asr_text = "" if final["asr_mean"] is None else f" asr={final['asr_mean']:.4f}"
    where = f" -> {out_dir}" if out_dir is not None else ""
    print(f"done: rounds={config.schedule.rounds} acc={final['acc']:.4f}{asr_text}{where}")
    return EXIT_OK


def _cmd_preset(args) -> int:
    seeds = tuple(range(args.seeds))
    raws = cfg_mod.preset(args.name, seeds=seeds)
    out_dir = _resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, raw in enumerate(raws):
        echo = cfg_mod.materialize(raw)
        path = out_dir / f"{args.name}_{i:02d}.yaml"
        path.write_text(cfg_mod.dump_yaml(echo), encoding="utf-8")
    print(f"wrote {len(raws)} configs to {out_dir}")
    return EXIT_OK


def _cmd_export_trigger(args) -> int:
    src = Path(args.run_dir) / f"trigger_client{args.client}.bin"
    if not src.exists():
        raise DataFormatError(f"no trigger artifact at {src}")
    trig = attacks.load_trigger(src)
    attacks.save_trigger(args.out, trig)
    print(f"exported {trig.mode} trigger (dim {trig.pattern.size}) to {args.out}")
    return EXIT_OK


def _cmd_import_trigger(args) -> int:
    trig = attacks.load_trigger(args.file)
    print(f"trigger: mode={trig.mode} blend_strength={trig.blend_strength} dim={trig.pattern.size}")
    if args.out is not None:
        attacks.save_trigger(args.out, trig)
        print(f"copied to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedspa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config", help="path to a YAML config")
    run_p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path override, e.g. schedule.rounds=50")
    run_p.add_argument("--dry-run", action="store_true", help="validate and echo the config, no run")
    run_p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    run_p.set_defaults(func=_cmd_run)

    preset_p = sub.add_parser("preset", help="emit a desk-scale config family")
    preset_p.add_argument("name", choices=cfg_mod.PRESET_NAMES)
    preset_p.add_argument("--out", required=True, help="directory for the generated configs")
    preset_p.add_argument("--seeds", type=int, default=3, help="seeds per cell (default 3)")
    preset_p.set_defaults(func=_cmd_preset)

    exp_p = sub.add_parser("export-trigger", help="copy an optimized trigger out of a run directory")
    exp_p.add_argument("run_dir")
    exp_p.add_argument("--client", type=int, required=True)
    exp_p.add_argument("--out", required=True)
    exp_p.set_defaults(func=_cmd_export_trigger)

    imp_p = sub.add_parser("import-trigger", help="validate and describe a trigger file")
    imp_p.add_argument("file")
    imp_p.add_argument("--out", default=None, help="re-serialize to this path")
    imp_p.set_defaults(func=_cmd_import_trigger)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
