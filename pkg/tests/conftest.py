from __future__ import annotations

import functools
from pathlib import Path

import numpy as np
import pytest

from hexoct import shapes
from hexoct.io import write_obj
from hexoct.surface import TriangleSurface


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sphere3():
    """Icosphere with 642 vertices, normalized into the root cube."""
    return TriangleSurface.from_arrays(*shapes.icosphere(3))


@pytest.fixture(scope="session")
def cube_surface():
    return TriangleSurface.from_arrays(*shapes.box(n=4))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


MODELS = {
    "sphere": lambda: shapes.icosphere(4),
    "cube": lambda: shapes.box(n=8),
    "bunny": lambda: shapes.bunny_like(4),
    "torus": lambda: shapes.torus(),
}


@functools.lru_cache(maxsize=None)
def model_file(name: str, root: str) -> Path:
    path = Path(root) / f"{name}.obj"
    write_obj(path, *MODELS[name]())
    return path


@functools.lru_cache(maxsize=None)
def end_to_end(name: str, base: int, top: int, root: str, max_iterations: int = 150_000, stop: bool = True):
    """Run the full pipeline once per configuration and keep the result.

    Returns ``(out_mesh, report, dump_dir, seconds)``.
    """
    import time

    from hexoct.pipeline import PipelineConfig, run_pipeline
    from hexoct.quality.optimizer import OptimizerConfig

    src = model_file(name, root)
    tag = f"{name}_{base}{top}_{max_iterations}_{int(stop)}"
    dump = Path(root) / tag
    cfg = PipelineConfig(
        input=src,
        output=Path(root) / f"{tag}.vtk",
        base_level=base,
        max_level=top,
        optimizer=OptimizerConfig(max_iterations=max_iterations, stop_at_target=stop),
        dump_dir=dump,
        report=Path(root) / f"{tag}.report",
    )
    t0 = time.perf_counter()
    mesh, report = run_pipeline(cfg)
    return mesh, report, dump, time.perf_counter() - t0


@pytest.fixture(scope="session")
def e2e(tmp_path_factory):
    """Cached end-to-end runner shared across test modules."""
    root = str(tmp_path_factory.mktemp("e2e"))

    def run(name, base, top, max_iterations=150_000, stop=True):
        return end_to_end(name, base, top, root, max_iterations, stop)

    run.root = root
    run.surface = lambda name: model_file(name, root)
    return run
