"""Two-frame optical flow by aggregation of local parametric candidates.

Typical use::

    from candflow import RunConfig, estimate_flow
    result = estimate_flow(img1, img2, RunConfig())
    result.flow, result.occ
"""
from .aggregation import EnergyParams, aggregate, energy_total
from .candidates import CandidateSet
from .config import RunConfig
from .discrete import BinaryMRF, max_flow_solve, qpbo_solve
from .io import read_flo, read_image, write_flo
from .metrics import EvalReport, best_candidate_flow, epe_map, eval_metrics
from .pipeline import FlowResult, build_candidates, estimate_flow
from .viz import flow_to_color

__all__ = [
    "BinaryMRF",
    "CandidateSet",
    "EnergyParams",
    "EvalReport",
    "FlowResult",
    "RunConfig",
    "aggregate",
    "best_candidate_flow",
    "build_candidates",
    "energy_total",
    "epe_map",
    "estimate_flow",
    "eval_metrics",
    "flow_to_color",
    "max_flow_solve",
    "qpbo_solve",
    "read_flo",
    "read_image",
    "write_flo",
]
