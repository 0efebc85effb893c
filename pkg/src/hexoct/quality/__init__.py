from hexoct.quality.metrics import HexQuality, hex_quality, jacobians, min_quality

# buffer and optimizer import hexoct.mesh, which imports metrics from here;
# load them on first access to keep the import graph acyclic
_LAZY = {
    "BufferBinding": "buffer",
    "binding_arrays": "buffer",
    "build_buffer_layer": "buffer",
    "Optimizer": "optimizer",
    "OptimizerConfig": "optimizer",
    "OptimizerDivergence": "optimizer",
    "OptimizerState": "optimizer",
    "energy_and_gradient": "optimizer",
    "optimize": "optimizer",
    "smart_laplacian": "optimizer",
}

__all__ = ["HexQuality", "hex_quality", "jacobians", "min_quality", *_LAZY]


def __getattr__(name):
    if name in _LAZY:
        import importlib

        return getattr(importlib.import_module(f"hexoct.quality.{_LAZY[name]}"), name)
    raise AttributeError(f"module 'hexoct.quality' has no attribute {name!r}")
