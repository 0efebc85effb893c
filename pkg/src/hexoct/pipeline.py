"""End-to-end meshing pipeline and quality reporting."""
from __future__ import annotations

import dataclasses
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from hexoct.coremesh import TopologyError, clear_buffer, remove_exterior
from hexoct.dualmesh import TemplateError, detect_transitions, extract_dual
from hexoct.mesh import HexMesh, boundary_euler_characteristic, boundary_is_closed_manifold
from hexoct.octree import ConfigError, RefinementConfig, build_initial_octree, enforce_strong_balance
from hexoct.quality.buffer import build_buffer_layer
from hexoct.quality.optimizer import Optimizer, OptimizerConfig, OptimizerDivergence
from hexoct.surface import SurfaceError, TriangleSurface, load_surface
from hexoct.tree import TreeError

log = logging.getLogger(__name__)

HISTOGRAM_BINS = 20
MAX_LEVEL_LIMIT = 12


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it and ``exit_code`` classifies it."""

    def __init__(self, stage: str, message: str, exit_code: int):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code


@dataclass
class PipelineConfig:
    input: Path
    output: Path
    base_level: int | None = None
    max_level: int = 9
    curvature_thresholds: tuple[float, ...] | None = None
    thickness_thresholds: tuple[float, ...] | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    dump_dir: Path | None = None
    report: Path | None = None

    def __post_init__(self):
        self.input = Path(self.input)
        self.output = Path(self.output)
        self.dump_dir = Path(self.dump_dir) if self.dump_dir is not None else None
        self.report = Path(self.report) if self.report is not None else None

    @property
    def resolved_base_level(self) -> int:
        return min(5, self.max_level) if self.base_level is None else self.base_level

    def refinement(self) -> RefinementConfig:
        base = self.resolved_base_level
        ladder = RefinementConfig.for_levels(base, self.max_level)
        return RefinementConfig(
            self.curvature_thresholds or ladder.curvature_thresholds,
            self.thickness_thresholds or ladder.thickness_thresholds,
            base,
            self.max_level,
        )

    def validate(self) -> None:
        if not (0 <= self.resolved_base_level <= self.max_level <= MAX_LEVEL_LIMIT):
            raise ConfigError(
                f"levels must satisfy 0 <= base_level <= max_level <= {MAX_LEVEL_LIMIT}, "
                f"got base_level={self.resolved_base_level}, max_level={self.max_level}"
            )
        self.refinement().validate()
        try:
            self.optimizer.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        out_dir = self.output.parent if str(self.output.parent) else Path(".")
        if not out_dir.is_dir() or not os.access(out_dir, os.W_OK):
            raise ConfigError(f"output directory {out_dir} is not writable")

    def as_record(self) -> dict[str, Any]:
        ref = self.refinement()
        opt = dataclasses.asdict(self.optimizer)
        opt.pop("verbose", None)
        return {
            "input": str(self.input),
            "output": str(self.output),
            "base_level": ref.base_level,
            "max_level": ref.max_level,
            "curvature_thresholds": ",".join(f"{x:g}" for x in ref.curvature_thresholds),
            "thickness_thresholds": ",".join(f"{x:g}" for x in ref.thickness_thresholds),
            **{k: v for k, v in opt.items() if v is not None},
        }


@dataclass
class QualityReport:
    n_vertices: int
    n_hexes: int
    min_sj: float
    max_sj: float
    histogram: np.ndarray
    levels: tuple[int, int]
    stage_seconds: dict[str, float]
    boundary_euler: int | None = None
    stages: list[dict[str, Any]] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    target_met: bool = True

    @staticmethod
    def histogram_of(min_sj: np.ndarray) -> np.ndarray:
        counts, _ = np.histogram(np.clip(min_sj, -1.0, 1.0), bins=HISTOGRAM_BINS, range=(-1.0, 1.0))
        return counts

    @classmethod
    def from_mesh(cls, mesh: HexMesh, levels: tuple[int, int], stage_seconds: dict[str, float], **kw) -> "QualityReport":
        _, sj = mesh.quality()
        return cls(
            n_vertices=mesh.n_vertices,
            n_hexes=mesh.n_hexes,
            min_sj=float(sj.min()),
            max_sj=float(sj.max()),
            histogram=cls.histogram_of(sj),
            levels=levels,
            stage_seconds=dict(stage_seconds),
            **kw,
        )

    def summary_record(self) -> dict[str, Any]:
        return {
            "record": "summary",
            "vertices": self.n_vertices,
            "hexes": self.n_hexes,
            "min_sj": f"{self.min_sj:.6f}",
            "max_sj": f"{self.max_sj:.6f}",
            "levels": f"{self.levels[0]}-{self.levels[1]}",
            "boundary_euler": self.boundary_euler,
            "target_met": self.target_met,
            "histogram": ",".join(str(int(c)) for c in self.histogram),
            "total_seconds": f"{sum(self.stage_seconds.values()):.3f}",
        }

    def lines(self) -> list[str]:
        records = [{"record": "config", **self.config}, *self.stages, self.summary_record()]
        return [" ".join(f"{k}={v}" for k, v in r.items()) for r in records]

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n")


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (SurfaceError, ConfigError, OSError)):
        return 2
    if isinstance(exc, (TopologyError, TreeError, TemplateError)):
        return 3
    if isinstance(exc, OptimizerDivergence):
        return 4
    return 1


class _Stages:
    def __init__(self):
        self.seconds: dict[str, float] = {}
        self.records: list[dict[str, Any]] = []

    def run(self, name: str, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except PipelineError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise PipelineError(name, f"{type(exc).__name__}: {exc}", _exit_code_for(exc)) from exc
        dt = time.perf_counter() - t0
        self.seconds[name] = dt
        self.records.append({"record": "stage", "stage": name, "seconds": f"{dt:.3f}"})
        return out

    def note(self, **kw) -> None:
        self.records[-1].update(kw)


def run_pipeline(cfg: PipelineConfig, progress: TextIO | None = None) -> tuple[HexMesh, QualityReport]:
    """Mesh ``cfg.input`` and write the result to ``cfg.output``.

    Returns the final mesh in the input's original coordinates and its
    quality report. Raises :class:`PipelineError` naming the failing stage.
    """
    try:
        cfg.validate()
    except ConfigError as exc:
        raise PipelineError("config", str(exc), 2) from exc
    stages = _Stages()
    dump = cfg.dump_dir
    if dump is not None:
        dump.mkdir(parents=True, exist_ok=True)

    surface: TriangleSurface = stages.run("load", load_surface, cfg.input)
    stages.note(triangles=surface.n_triangles, vertices=len(surface.vertices))

    tree = stages.run("octree", build_initial_octree, surface, cfg.refinement())
    stages.note(leaves=len(tree.leaves))
    tree = stages.run("balance", enforce_strong_balance, tree)
    levels = tuple(int(x) for x in (tree.min_level, tree.depth))
    stages.note(leaves=len(tree.leaves), levels=f"{levels[0]}-{levels[1]}")
    if dump is not None:
        tree.dump_vtk(dump / "octree.vtk")

    transitions = stages.run("transitions", detect_transitions, tree)
    stages.note(count=len(transitions))
    dual = stages.run("dual", extract_dual, tree, transitions)
    stages.note(hexes=dual.n_hexes)
    if dump is not None:
        dual.write_vtk(dump / "dual.vtk")

    core, _ = stages.run("exterior", remove_exterior, dual, surface)
    stages.note(hexes=core.n_hexes)
    if dump is not None:
        core.write_vtk(dump / "exterior.vtk")
    core = stages.run("clearance", clear_buffer, core, surface)
    stages.note(hexes=core.n_hexes)
    if dump is not None:
        core.write_vtk(dump / "core.vtk")

    buffered, bindings = stages.run("buffer", build_buffer_layer, core, surface)
    stages.note(hexes=buffered.n_hexes, bound_vertices=len(bindings))
    if dump is not None:
        buffered.write_vtk(dump / "buffer.vtk")

    opt_cfg = dataclasses.replace(cfg.optimizer)
    if opt_cfg.length_unit is None:
        opt_cfg.length_unit = 1.0 / (1 << cfg.max_level)

    def _optimize():
        opt = Optimizer(buffered, bindings, surface, opt_cfg, out=progress)
        opt.run()
        return opt

    opt = stages.run("optimize", _optimize)
    final = opt.result_mesh()
    stages.note(iterations=opt.state.iteration, eps_sj=f"{opt.state.eps:.2f}", plateau=opt.plateau_reached)

    if not boundary_is_closed_manifold(final):
        raise PipelineError("verify", "output boundary is not a closed 2-manifold", 3)
    chi = boundary_euler_characteristic(final)

    out_mesh = HexMesh(surface.normalization.to_original(final.vertices), final.hexes, final.provenance)

    def _write():
        out_mesh.write_vtk(cfg.output)

    stages.run("write", _write)
    report = QualityReport.from_mesh(
        out_mesh,
        levels,
        stages.seconds,
        boundary_euler=chi,
        stages=stages.records,
        config=cfg.as_record(),
    )
    report.target_met = report.min_sj >= opt_cfg.target_sj
    if cfg.report is not None:
        report.write(cfg.report)
    return out_mesh, report
