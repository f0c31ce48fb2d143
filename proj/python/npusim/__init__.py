"""Tiling compiler and 4x4 NPU array simulator bindings."""

try:
    from npusim._core import (  # type: ignore  # packaged layout
        bf16_roundtrip,
        gemm,
        gemm_divergence,
        gemm_sizes,
        peak_flops,
        plan_info,
        simulate,
        step_flops,
        toy_train_losses,
        version,
    )
except ImportError:  # build-tree layout: _core.so sits directly on sys.path
    from _core import (  # type: ignore
        bf16_roundtrip,
        gemm,
        gemm_divergence,
        gemm_sizes,
        peak_flops,
        plan_info,
        simulate,
        step_flops,
        toy_train_losses,
        version,
    )

__all__ = [
    "bf16_roundtrip",
    "gemm",
    "gemm_divergence",
    "gemm_sizes",
    "peak_flops",
    "plan_info",
    "simulate",
    "step_flops",
    "toy_train_losses",
    "version",
]

__version__ = version()
