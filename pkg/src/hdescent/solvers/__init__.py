"""First-order methods: similar triangles (fixed and adaptive), gradient descent, restarts."""

from .base import CSV_HEADER, Record, RunLog, SolverState, Status, StopRule
from .gd import gd
from .restarts import accuracy_budget, l_doubling, restart_half, rstm, rstm_segment_length
from .stm import astm, next_alpha, stm

__all__ = [
    "CSV_HEADER",
    "Record",
    "RunLog",
    "SolverState",
    "Status",
    "StopRule",
    "astm",
    "stm",
    "gd",
    "next_alpha",
    "restart_half",
    "rstm",
    "rstm_segment_length",
    "l_doubling",
    "accuracy_budget",
]
