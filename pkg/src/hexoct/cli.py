"""Command-line entry point: ``hexoct mesh <input> -o <output.vtk>``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from hexoct.pipeline import PipelineConfig, PipelineError, run_pipeline
from hexoct.quality.optimizer import OptimizerConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TOPOLOGY = 3
EXIT_PLATEAU = 4

_LEVEL_KEYS = {"base_level", "max_level"}
_LIST_KEYS = {"curvature_thresholds", "thickness_thresholds"}
_OPT_FIELDS = {f.name: f.type for f in dataclasses.fields(OptimizerConfig)}


class ConfigFileError(ValueError):
    pass


def _parse_bool(value: str) -> bool:
    low = value.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(value)


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key in _LEVEL_KEYS:
                out[key] = int(value)
            elif key in _LIST_KEYS:
                out[key] = tuple(float(x) for x in value.split(",") if x.strip())
            elif key in _OPT_FIELDS and key != "verbose":
                default = getattr(OptimizerConfig(), key)
                if isinstance(default, bool):
                    out[key] = _parse_bool(value)
                else:
                    out[key] = int(value) if isinstance(default, int) else float(value)
            else:
                raise ConfigFileError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigFileError):
                raise
            raise ConfigFileError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hexoct", description="Adaptive all-hex mesh generation")
    sub = parser.add_subparsers(dest="command", required=True)
    m = sub.add_parser("mesh", help="mesh a closed triangle surface")
    m.add_argument("input", type=Path, help="OBJ, OFF or STL surface")
    m.add_argument("-o", "--output", type=Path, required=True, help="output VTK file")
    m.add_argument("--config", type=Path, help="key = value configuration file")
    m.add_argument("--base-level", type=int)
    m.add_argument("--max-level", type=int)
    m.add_argument("--alpha", type=float, help="gradient step size")
    m.add_argument("--max-iterations", type=int)
    m.add_argument("--stop-at-target", action="store_true", help="stop once min SJ reaches the target")
    m.add_argument("--dump-stages", type=Path, metavar="DIR", help="write per-stage VTK files")
    m.add_argument("--report", type=Path, help="quality report file (key=value records)")
    m.add_argument("-q", "--quiet", action="store_true", help="suppress progress lines")
    m.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in ("base_level", "max_level", "alpha", "max_iterations"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    opt_kw = {k: values.pop(k) for k in list(values) if k in _OPT_FIELDS}
    if args.stop_at_target:
        opt_kw["stop_at_target"] = True
    opt = OptimizerConfig(**opt_kw, verbose=not args.quiet)
    return PipelineConfig(
        input=args.input,
        output=args.output,
        optimizer=opt,
        dump_dir=args.dump_stages,
        report=args.report,
        **values,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigFileError, OSError, TypeError) as exc:
        print(f"hexoct: [config] {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        _, report = run_pipeline(cfg, progress=None if args.quiet else sys.stdout)
    except PipelineError as exc:
        print(f"hexoct: {exc}", file=sys.stderr)
        return exc.exit_code
    for line in report.lines()[-1:]:
        print(line)
    if not report.target_met:
        print(
            f"hexoct: [optimize] min scaled Jacobian {report.min_sj:.4f} below target {cfg.optimizer.target_sj}",
            file=sys.stderr,
        )
        return EXIT_PLATEAU
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
