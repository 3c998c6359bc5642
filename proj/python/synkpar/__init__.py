"""Synchronous data-parallel execution on CPU worker ranks.

The extension module does the work; this package re-exports it and adds a few
conveniences. The programming model: fork a pool of worker ranks, register
functions against it, then each call scatters inputs by leading dimension,
runs the kernel on every rank at once, and reduces or gathers the outputs.
Per-rank state lives in replicated variables managed through collectives.
"""

import json as _json

from ._synkpar import (  # noqa: F401
    AdamRule,
    ArgumentError,
    BoundsError,
    CapacityError,
    CoherenceError,
    DTypeError,
    Error,
    Function,
    IoError,
    Kernel,
    KernelContext,
    LifecycleError,
    MlpConfig,
    MomentumRule,
    NumericError,
    ParamBlock,
    PhaseError,
    Pool,
    Replicated,
    RmsPropRule,
    SgdRule,
    ShapeError,
    SharedInput,
    SlicingConflictError,
    Trainer,
    UseAfterFreeError,
    distribute,
    load_tensor,
    make_function,
    mlp_grad_kernel,
    mlp_init_params,
    mlp_make_dataset,
    py_kernel,
    replicate,
    run_bench_json,
    save_tensor,
)

__all__ = [
    "AdamRule", "ArgumentError", "BoundsError", "CapacityError", "CoherenceError",
    "DTypeError", "Error", "Function", "IoError", "Kernel", "KernelContext",
    "LifecycleError", "MlpConfig", "MomentumRule", "NumericError", "ParamBlock",
    "PhaseError", "Pool", "Replicated", "RmsPropRule", "SgdRule", "ShapeError",
    "SharedInput", "SlicingConflictError", "Trainer", "UseAfterFreeError",
    "distribute", "load_tensor", "make_function", "make_py_function",
    "mlp_grad_function", "mlp_grad_kernel", "mlp_init_params", "mlp_make_dataset",
    "py_kernel", "replicate", "run_bench", "run_bench_json", "save_tensor",
]


def make_py_function(pool, name, fn, inputs, outputs, updates=(), reads=()):
    """Build and register a parallel function around a Python kernel.

    ``fn(inputs, ctx)`` runs once per rank (and once per slice) on that rank's
    shard and must return ``len(outputs)`` arrays followed by one update delta
    per entry of ``updates``. ``inputs`` entries are ``"scatter"`` or
    ``"broadcast"``; ``outputs`` entries are reduce ops (``"sum"``, ``"mean"``,
    ``"max"``, ``"min"``, ``"prod"``, ``"gather"``); ``updates`` entries are
    ``(replicated_var, combine)`` with combine one of ``"add"``,
    ``"weighted_mean"``, ``"overwrite"``.
    """
    updates = list(updates)
    kernel = py_kernel(
        name,
        len(inputs),
        fn,
        reads=list(reads),
        n_outputs=len(outputs),
        updates=updates,
    )
    return make_function(pool, kernel, list(inputs), list(outputs), updates)


def mlp_grad_function(pool, block):
    """Register the native MLP gradient kernel: scatter (x, y), weighted-mean
    loss output, weighted-mean gradient update into ``block.grads``."""
    return make_function(
        pool,
        mlp_grad_kernel(block),
        ["scatter", "scatter"],
        ["mean"],
        [(block.grads, "weighted_mean")],
    )


def run_bench(**kwargs):
    """Run the scaling benchmark and return the report as a dict."""
    return _json.loads(run_bench_json(**kwargs))
