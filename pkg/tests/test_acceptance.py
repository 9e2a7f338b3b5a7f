"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line, and the lines are
repeated in the terminal summary of the session.
"""
import os
import re
import struct
import time
from pathlib import Path

import numpy as np
import pytest

from candflow import cli
from candflow.aggregation import build_proposals
from candflow.discrete import UNLABELED, max_flow_solve, qpbo_solve
from candflow.io import read_flo, read_image, write_flo, write_image
from candflow.metrics import best_candidate_flow, epe_map, eval_metrics
from candflow.occlusion import parzen_confidence
from candflow.parametric import estimate_affine
from candflow.patches import PatchSpec
from oracles import energy_table, random_mrf
from synthetic import sinusoid_texture, translation_pair
from test_metrics import spreadsheet_case

TRACE = re.compile(r"iteration=(\d+) step=(\w+) move=(\d+) energy_before=(\S+) energy_after=(\S+) accepted=([01])")


def test_criterion_01_max_flow_exact(verdict):
    rng = np.random.default_rng(2024)
    # integer-valued costs keep every energy exact in floating point
    mrfs = [random_mrf(rng, int(rng.integers(1, 17)), submodular=True, integer=True) for _ in range(500)]
    solve_time, bad = 0.0, 0
    for m in mrfs:
        t0 = time.perf_counter()
        labels, e = max_flow_solve(m)
        solve_time += time.perf_counter() - t0
        best = energy_table(m)[1].min()
        bad += not (m.energy(labels) == best and e == best)
    verdict(1, bad == 0 and solve_time < 10.0,
            f"max-flow optimal on {500 - bad}/500 submodular MRFs (<=16 nodes), solver time {solve_time:.2f}s")


def test_criterion_02_qpbo_persistence(verdict):
    rng = np.random.default_rng(7)
    solve_time, bad, n_sub, unlabeled = 0.0, 0, 0, 0
    for _ in range(500):
        sub = bool(rng.random() < 0.5)
        m = random_mrf(rng, int(rng.integers(1, 13)), submodular=sub)
        t0 = time.perf_counter()
        q = qpbo_solve(m)
        solve_time += time.perf_counter() - t0
        labs, e = energy_table(m)
        opts = labs[e <= e.min() + 1e-9]
        lab = q != UNLABELED
        ok = bool(np.any(np.all(opts[:, lab] == q[lab], axis=1)))
        if sub:
            n_sub += 1
            ok = ok and bool(lab.all())
        unlabeled += int((~lab).sum())
        bad += not ok
    verdict(2, bad == 0 and solve_time < 30.0,
            f"persistence on {500 - bad}/500 MRFs ({n_sub} submodular, all labeled), "
            f"{unlabeled} unlabeled nodes on mixed ones, solver time {solve_time:.2f}s")


def test_criterion_03_energy_monotone(runs64, verdict):
    worst, n_checked, details = -np.inf, 0, []
    ok = True
    for name, run in runs64.items():
        steps = [TRACE.fullmatch(line) for line in run.trace]
        steps = [s for s in steps if s]
        iters = {int(s.group(1)) for s in steps}
        checked = [s for s in steps if s.group(2) in ("fuse", "occlusion")]
        rise = max(float(s.group(5)) - float(s.group(4)) for s in checked)
        worst = max(worst, rise)
        n_checked += len(checked)
        ok = ok and len(iters) == 3 and rise <= 1e-9 and any(s.group(2) == "occlusion" for s in checked)
        details.append(f"{name}: {len(checked)} steps")
    verdict(3, ok, f"{n_checked} fusion/occlusion steps over 3 iterations ({', '.join(details)}), "
                   f"largest energy change {worst:.3g}")


def test_criterion_04_flow_recovery(runs64, verdict):
    tr, af = runs64["translation"], runs64["affine"]
    e_tr = eval_metrics(tr.result.flow, tr.pair.flow).epe_all
    e_af = eval_metrics(af.result.flow, af.pair.flow).epe_all
    ok = e_tr < 0.3 and e_af < 0.5 and tr.seconds < 120 and af.seconds < 120
    verdict(4, ok, f"translation epe_all {e_tr:.4f} ({tr.seconds:.1f}s), affine epe_all {e_af:.4f} "
                   f"({af.seconds:.1f}s), exhaustive matching")


def test_criterion_05_affine_irls(verdict):
    size = 96
    cases = [(np.eye(2), (0.5, -0.25)), (np.eye(2), (0.3, 0.7)),
             (np.array([[1.02, 0.01], [-0.01, 0.98]]), (0.4, -0.3)),
             (np.array([[0.99, -0.02], [0.015, 1.01]]), (-0.6, 0.2))]
    rng = np.random.default_rng(5)
    err_t, err_l, err_noisy = 0.0, 0.0, 0.0
    for A, b in cases:
        f1 = sinusoid_texture(size, size, 0)
        f2 = sinusoid_texture(size, size, 0, A=A, b=b)
        patch = PatchSpec((26, 26), 44)
        fit = estimate_affine(f1, f2, patch)
        L = A - np.eye(2)
        t = L @ np.asarray(fit.center) + np.asarray(b)
        expected = np.array([t[0], L[0, 0], L[0, 1], t[1], L[1, 0], L[1, 1]])
        d = np.abs(fit.theta - expected)
        err_t, err_l = max(err_t, d[[0, 3]].max()), max(err_l, d[[1, 2, 4, 5]].max())
        n1 = f1 + rng.normal(0, 0.01, f1.shape)
        n2 = f2 + rng.normal(0, 0.01, f2.shape)
        err_noisy = max(err_noisy, np.abs(estimate_affine(n1, n2, patch).theta - expected).max())
    ok = err_t <= 1e-3 and err_l <= 1e-2 and err_noisy <= 0.05
    verdict(5, ok, f"noise-free max error translation {err_t:.2e}, linear {err_l:.2e}; "
                   f"1% noise max error {err_noisy:.2e}")


def _dominance(run):
    stage, gt = run.result.stage, run.pair.flow
    bcf_c = epe_map(best_candidate_flow(stage.initial, gt), gt)
    bcf_f = epe_map(best_candidate_flow(stage.extended, gt), gt)
    ok = bool(np.all(bcf_f <= bcf_c)) and bcf_f.mean() <= bcf_c.mean()
    worst_margin = np.inf
    for prop in build_proposals(stage.initial, stage.patch_set):
        cover = prop.slots >= 0
        if not cover.any():
            continue
        p_err = epe_map(stage.initial.gather(np.maximum(prop.slots, 0)), gt)[cover]
        worst_margin = min(worst_margin, p_err.mean() - bcf_c[cover].mean())
        ok = ok and bool(np.all(bcf_c[cover] <= p_err))
    final = epe_map(run.result.flow, gt).mean()
    raw = epe_map(run.result.raw_flow, gt)
    ok = ok and worst_margin >= 0 and final >= bcf_f.mean() and bool(np.all(raw >= bcf_f))
    return ok, f"C_f {bcf_f.mean():.4f} <= C {bcf_c.mean():.4f}, final {final:.4f}"


def test_criterion_06_bcf_ordering(runs64, two_layer_runs, verdict):
    runs = dict(runs64)
    runs["two-layer-96"], runs["two-layer-96-ablated"] = two_layer_runs
    results = {name: _dominance(run) for name, run in runs.items()}
    ok = all(r[0] for r in results.values())
    verdict(6, ok, "; ".join(f"{name}: {r[1]}" for name, r in results.items()))


def test_criterion_07_occlusion_detection(two_layer_runs, verdict):
    full, ablated = two_layer_runs
    band = full.pair.occ.astype(bool)
    # columns vacated by the background leaving the frame are not part of the disocclusion band
    band[:, :2] = False
    det = full.result.occ.astype(bool)
    iou = (det & band).sum() / (det | band).sum()
    occ_gt = full.pair.occ
    u_full = eval_metrics(full.result.flow, full.pair.flow, occ_gt).epe_unmatched
    u_abl = eval_metrics(ablated.result.flow, full.pair.flow, occ_gt).epe_unmatched
    verdict(7, iou >= 0.5 and u_full <= u_abl,
            f"IoU {iou:.3f}; epe_unmatched {u_full:.4f} with occlusion terms, {u_abl:.4f} without")


def test_criterion_08_parzen(verdict):
    centers = [(10.0, 12.0), (30.5, 8.0), (22.0, 25.0), (17.25, 16.75)]
    sigma, w, h = 2.5, 40, 32
    k = np.arange(-200, 201)
    lattice = np.exp(-k * k / (2 * sigma ** 2)).sum() ** 2
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    closed = sum(np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2)) for cx, cy in centers)
    err_d = np.abs(parzen_confidence(centers, sigma, w, h, "discrete") - closed / (lattice * len(centers))).max()
    err_r = np.abs(parzen_confidence(centers, sigma, w, h, "raw")
                   - closed / (2 * np.pi * sigma * len(centers))).max()
    rng = np.random.default_rng(3)
    masses = [parzen_confidence(rng.uniform(15, 25, (int(rng.integers(1, 6)), 2)), sigma, w, h).sum()
              for _ in range(50)]
    ok = err_d <= 1e-9 and err_r <= 1e-9 and min(masses) > 0 and max(masses) <= 1.0 + 1e-12
    verdict(8, ok, f"closed-form error discrete {err_d:.1e}, raw {err_r:.1e}; "
                   f"interior mass in [{min(masses):.6f}, {max(masses):.15f}]")


def test_criterion_09_format_fidelity(tmp_path, verdict):
    rng = np.random.default_rng(9)
    exact = 0
    for i in range(100):
        h, w = (int(v) for v in rng.integers(1, 40, 2))
        f = (rng.normal(size=(h, w, 2)) * rng.uniform(0.1, 200)).astype(np.float32)
        path = tmp_path / f"{i}.flo"
        write_flo(f, path)
        exact += read_flo(path).tobytes() == f.tobytes()
    write_flo(np.array([[[1.0, 2.0], [3.0, 4.0]]]), tmp_path / "layout.flo")
    layout = (tmp_path / "layout.flo").read_bytes() == (struct.pack("<f", 202021.25) + struct.pack("<ii", 2, 1)
                                                         + struct.pack("<4f", 1, 2, 3, 4))
    rep = eval_metrics(*spreadsheet_case())
    want = (0.9375, 109 / 112, 0.6875, 0.9375, 1.875)
    got = (rep.epe_all, rep.epe_matched, rep.epe_unmatched, rep.epe_d0_10, rep.epe_s40_plus)
    oracle_err = max(abs(a - b) for a, b in zip(got, want))
    verdict(9, exact == 100 and layout and oracle_err <= 1e-12,
            f"{exact}/100 bit-exact round trips, 2x1 layout {'ok' if layout else 'wrong'}, "
            f"4x4 oracle error {oracle_err:.1e}")


def test_criterion_10_determinism(tmp_path, verdict):
    p = translation_pair(64, (3, 2), seed=4)
    write_image(p.img1, tmp_path / "1.png")
    write_image(p.img2, tmp_path / "2.png")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.flo"
        code = cli.main(["estimate", "--frame1", str(tmp_path / "1.png"), "--frame2", str(tmp_path / "2.png"),
                         "--out", str(out), "--strategy", "randomized", "--seed", "11"])
        assert code == 0
        outs.append(out.read_bytes())
    verdict(10, outs[0] == outs[1], f"two randomized-matcher CLI runs with seed 11: "
                                    f"{'bit-identical' if outs[0] == outs[1] else 'different'} .flo output")


SINTEL_ENV = "CANDFLOW_SINTEL_PAIR"


@pytest.mark.skipif(not os.environ.get(SINTEL_ENV), reason=f"set {SINTEL_ENV} to a Sintel pair directory")
def test_criterion_11_sintel_crop(tmp_path, verdict):
    root = Path(os.environ[SINTEL_ENV])
    frames = sorted(root.glob("*.png"))[:2]
    gt = read_flo(sorted(root.glob("*.flo"))[0]).astype(np.float64)
    img1, img2 = read_image(frames[0]), read_image(frames[1])
    h, w = gt.shape[:2]
    y0, x0 = (h - 128) // 2, (w - 128) // 2
    crop = (slice(y0, y0 + 128), slice(x0, x0 + 128))
    write_image(img1[crop], tmp_path / "1.png")
    write_image(img2[crop], tmp_path / "2.png")
    code = cli.main(["estimate", "--frame1", str(tmp_path / "1.png"), "--frame2", str(tmp_path / "2.png"),
                     "--out", str(tmp_path / "e.flo")])
    est = read_flo(tmp_path / "e.flo") if code == 0 else None
    epe = eval_metrics(est, gt[crop]).epe_all if est is not None else np.nan
    zero = eval_metrics(np.zeros_like(gt[crop]), gt[crop]).epe_all
    verdict(11, code == 0 and np.isfinite(epe) and epe <= zero,
            f"128x128 crop of {frames[0].name}: epe_all {epe:.3f}, zero-flow baseline {zero:.3f}")
