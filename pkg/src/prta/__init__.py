"""Probabilistic response-time analysis for fixed-priority task sets."""

from .analysis import Method, analyze
from .pmf import Pmf, convolve_direct, convolve_fft, pmf_from_pairs, self_conv_power, truncate_and_sum
from .taskset import GeneratorConfig, Task, TaskSet, generate_taskset, load_taskset, make_taskset, save_taskset

__all__ = [
    "GeneratorConfig",
    "Method",
    "Pmf",
    "Task",
    "TaskSet",
    "analyze",
    "convolve_direct",
    "convolve_fft",
    "generate_taskset",
    "load_taskset",
    "make_taskset",
    "pmf_from_pairs",
    "save_taskset",
    "self_conv_power",
    "truncate_and_sum",
]
