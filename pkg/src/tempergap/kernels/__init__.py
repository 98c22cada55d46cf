"""Markov kernels: single steps, tempering ladders, and the chain driver."""

from .backend import backend_name, compiled_available
from .driver import KernelDescriptor, Trace, observable_names, run_chain
from .steps import (
    PTState,
    STState,
    TemperatureLadder,
    build_ladder,
    lazy_mrw_step,
    mrw_step,
    pt_step,
    pt_swap_sweep,
    restricted_mrw_step,
    st_step,
)

__all__ = [
    "TemperatureLadder",
    "build_ladder",
    "PTState",
    "STState",
    "mrw_step",
    "lazy_mrw_step",
    "restricted_mrw_step",
    "pt_swap_sweep",
    "pt_step",
    "st_step",
    "KernelDescriptor",
    "Trace",
    "run_chain",
    "observable_names",
    "backend_name",
    "compiled_available",
]
