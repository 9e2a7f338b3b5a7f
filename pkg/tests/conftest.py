"""Session fixtures shared by the slow end-to-end tests."""
from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from candflow.config import RunConfig
from candflow.pipeline import FlowResult, estimate_flow
from synthetic import SyntheticPair, affine_pair, translation_pair, two_layer_pair

ACCEPTANCE_LINES: list[str] = []


@dataclass
class Run:
    pair: SyntheticPair
    result: FlowResult
    trace: list[str]
    seconds: float


def run_pipeline(pair: SyntheticPair, cfg: RunConfig | None = None, stage=None) -> Run:
    lines: list[str] = []
    t0 = time.perf_counter()
    res = estimate_flow(pair.img1, pair.img2, cfg, verbose=True, emit=lines.append, stage=stage)
    return Run(pair, res, lines, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def runs64() -> dict[str, Run]:
    """Default pipeline on the three 64x64 synthetic pairs."""
    pairs = {
        "translation": translation_pair(64, (3, 2)),
        "affine": affine_pair(64),
        "two-layer": two_layer_pair(64, box=(16, 18, 26, 26), seed=1),
    }
    return {name: run_pipeline(p) for name, p in pairs.items()}


@pytest.fixture(scope="session")
def two_layer_runs() -> tuple[Run, Run]:
    """96x96 two-layer scene with and without the occlusion terms, sharing one candidate stage."""
    pair = two_layer_pair(96)
    full = run_pipeline(pair)
    cfg = RunConfig()
    cfg.aggregation.occlusion = False
    ablated = run_pipeline(pair, cfg, stage=full.result.stage)
    return full, ablated


@pytest.fixture
def verdict():
    """Print and record one pass/fail line for an acceptance criterion, then assert it."""
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
