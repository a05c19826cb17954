"""End-to-end acceptance checks. Each test prints one PASS/FAIL line.

The desk-scale learning check trains for several minutes; the whole module
takes roughly 20 minutes on one CPU core.
"""

import json
import math
import time

import numpy as np
import pytest

from stobserver.cli import main
from stobserver.datasets import read_dataset
from stobserver.evaluation import (
    bound_diagnostics,
    bound_inputs_from_model,
    confusion_counts,
    csi,
    dbz_transform,
    hss,
    load_report,
    mae,
    mse,
    rademacher_term,
    ssim,
)
from stobserver.experiment import ExperimentConfig, load_config
from stobserver.learning import LossWeights, compute_losses, frame_loss, read_checkpoint, restore
from stobserver.observer import ObserverModel, SpatialDecoder, SpatialEncoder, degroup, group
from stobserver.tensor_core import Tensor, no_grad
from stobserver.verify import MICRO_CONFIG, composed_gradcheck, decay_suite, op_gradchecks, total_loss_gradient_gap


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number} [{title}]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


# -- shared end-to-end runs -------------------------------------------------------------
@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """Generate the desk blobs data, train the mnist-like-desk preset and evaluate it."""
    d = tmp_path_factory.mktemp("desk")
    cfg = load_config("mnist-like-desk")
    n_train, _, n_test = cfg.data.counts
    seed, t, hw = cfg.data.generator_seed, cfg.data.seq_len, f"{cfg.model.height}x{cfg.model.width}"
    t0 = time.perf_counter()
    for name, n, s in (("train", n_train, seed), ("test", n_test, seed + 1)):
        assert main(["generate", "--kind", "blobs", "--n", str(n), "--t", str(t), "--hw", hw,
                     "--seed", str(s), "--out", str(d / f"{name}.stds")]) == 0
    assert main(["train", "--config", "mnist-like-desk", "--data", str(d / "train.stds"),
                 "--out", str(d / "model.ckpt")]) == 0
    assert main(["evaluate", "--ckpt", str(d / "model.ckpt"), "--data", str(d / "test.stds"),
                 "--out", str(d / "report")]) == 0
    return d, time.perf_counter() - t0


@pytest.fixture(scope="module")
def cikm_run(tmp_path_factory):
    """A CIKM-shaped (5 in, 10 out, group size 5) model trained briefly through the CLI."""
    d = tmp_path_factory.mktemp("cikm")
    cfg = load_config("cikm-like-desk")
    assert main(["generate", "--kind", "blobs", "--n", "24", "--t", str(cfg.data.seq_len),
                 "--hw", str(cfg.model.height), "--seed", str(cfg.data.generator_seed),
                 "--out", str(d / "data.stds")]) == 0
    assert main(["train", "--config", "cikm-like-desk", "--data", str(d / "data.stds"),
                 "--out", str(d / "model.ckpt"), "--limit", "20", "--epochs", "1"]) == 0
    return d


def _load(ckpt_path):
    ckpt = read_checkpoint(ckpt_path)
    cfg = ExperimentConfig.from_dict(ckpt.config)
    model = ObserverModel(cfg.model, seed=cfg.seed)
    restore(ckpt, model, cfg.to_dict())
    return model, cfg


# -- 1 -------------------------------------------------------------------------------------
def test_gradient_soundness(capsys):
    t0 = time.perf_counter()
    errs = op_gradchecks(seed=0)
    errs["composed_loss"] = composed_gradcheck(seed=0, max_coords=12, config=MICRO_CONFIG)
    # the check differences the per-element terms; backprop of the reported total must agree
    gap = total_loss_gradient_gap(seed=0, config=MICRO_CONFIG)
    elapsed = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = all(e < 1e-5 for e in errs.values()) and gap < 1e-12 and elapsed < 120
    verdict(capsys, 1, "gradient soundness", ok,
            f"{len(errs)} checks, worst {worst} {errs[worst]:.2e} < 1e-5, "
            f"total-loss gradient gap {gap:.1e}, {elapsed:.0f}s < 120s")


# -- 2 -------------------------------------------------------------------------------------
def test_decay_property(capsys):
    held = decay_suite(MICRO_CONFIG, n_models=20, steps=50)
    ablation = decay_suite(MICRO_CONFIG.replace(a_constraint="none", a_init="normal"), n_models=20, steps=50)
    n_held = sum(r.holds for r in held)
    n_broken = sum(not r.holds for r in ablation)
    ok = n_held == 20 and n_broken > 0
    verdict(capsys, 2, "latent error decay", ok,
            f"sigmoid A: envelope holds for {n_held}/20 models over 50 steps; "
            f"unconstrained A: envelope violated for {n_broken}/20")


# -- 3 -------------------------------------------------------------------------------------
def test_structural_exactness(tmp_path, capsys):
    rng = np.random.default_rng(0)
    exact = True
    for shape, delta in (((2, 10, 1, 8, 8), 10), ((3, 6, 2, 5, 7), 3), ((1, 15, 1, 4, 4), 5)):
        y = rng.standard_normal(shape)
        exact &= np.array_equal(degroup(group(y, delta), delta).view(np.uint64), y.view(np.uint64))

    closes = []
    for preset in ("taxibj-like", "mnist-like", "cikm-like"):
        cfg = load_config(preset).model
        r = np.random.default_rng(1)
        enc = SpatialEncoder(cfg, r, np.float32)
        dec = SpatialDecoder(cfg, enc, r, np.float32)
        y = Tensor(r.random((1, cfg.group_channels, cfg.height, cfg.width), dtype=np.float32))
        with no_grad():
            x, feats = enc(y)
            closes.append(dec(x, feats).shape == y.shape)

    cfg = ExperimentConfig(
        name="resume", model=MICRO_CONFIG.replace(c_s=4, c_h=8, c_t=8, dtype="float32"),
        loss=LossWeights(1.0, 0.2, 0.1, 0.1),
    )
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.to_json())
    data = str(tmp_path / "d.stds")
    assert main(["generate", "--kind", "digits", "--n", "10", "--t", "8", "--hw", "16", "--sprite", "8",
                 "--out", data]) == 0
    base = ["train", "--config", str(cfg_path), "--data", data]
    assert main(base + ["--out", str(tmp_path / "straight.ckpt"), "--epochs", "2"]) == 0
    assert main(base + ["--out", str(tmp_path / "half.ckpt"), "--epochs", "1"]) == 0
    assert main(base + ["--out", str(tmp_path / "resumed.ckpt"), "--epochs", "1",
                        "--resume", str(tmp_path / "half.ckpt")]) == 0
    a, b = read_checkpoint(tmp_path / "straight.ckpt"), read_checkpoint(tmp_path / "resumed.ckpt")
    same = a.arrays.keys() == b.arrays.keys() and all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)
    same &= a.state == b.state
    ok = exact and all(closes) and same
    verdict(capsys, 3, "structural exactness", ok,
            f"group round trip bit-exact={exact}; geometry closes for 3 presets={all(closes)}; "
            f"2-epoch trajectory equal after resume={same}")


# -- 4 -------------------------------------------------------------------------------------
def _brute(p, t, thr):
    tp = fn = fp = tn = 0
    for a, b in zip(p.ravel().tolist(), t.ravel().tolist()):
        tp += a >= thr and b >= thr
        fn += a < thr and b >= thr
        fp += a >= thr and b < thr
        tn += a < thr and b < thr
    return tp, fn, fp, tn


def test_metric_oracles(capsys):
    skill_ok = True
    for seed in range(100):
        r = np.random.default_rng(seed)
        p = dbz_transform(r.integers(0, 256, (32, 32)).astype(float))
        t = dbz_transform(r.integers(0, 256, (32, 32)).astype(float))
        for thr in (5, 20, 40):
            tp, fn, fp, tn = _brute(p, t, thr)
            c = confusion_counts(p, t, thr)
            den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn)
            skill_ok &= c == (tp, fn, fp, tn)
            skill_ok &= hss(c).value == 2.0 * (tp * tn - fn * fp) / den
            skill_ok &= csi(c).value == tp / (tp + fn + fp)
    ends = dbz_transform(np.array([0.0, 255.0]))
    dbz_ok = abs(ends[0] + 10) < 1e-12 and abs(ends[1] - 85) < 1e-12

    r = np.random.default_rng(7)
    x = r.random((64, 64))
    ssim_gap = abs(ssim(x, x) - 1.0)

    p, t = r.random((2, 3, 1, 8, 8)), r.random((2, 3, 1, 8, 8))
    gaps = []
    for metric, f in ((mse, lambda e: e * e), (mae, abs)):
        ref = []
        for k in range(3):
            vals = [f(p[i, k, 0, a, b] - t[i, k, 0, a, b]) for i in range(2) for a in range(8) for b in range(8)]
            ref.append(sum(vals) / len(vals))
        gaps.append(np.abs(metric(p, t).per_frame - ref).max())
    ok = skill_ok and dbz_ok and ssim_gap < 1e-9 and max(gaps) < 1e-12
    verdict(capsys, 4, "metric oracles", ok,
            f"HSS/CSI exact on 100 grids x 3 thresholds={skill_ok}; dBZ endpoints={dbz_ok}; "
            f"|ssim(x,x)-1|={ssim_gap:.1e}; MSE/MAE loop gap={max(gaps):.1e}")


# -- 5 -------------------------------------------------------------------------------------
def test_loss_composition(capsys):
    worst = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        lam = r.uniform(0.0, 2.0, 4)
        pred, truth = Tensor(r.random((2, 4, 1, 8, 8))), Tensor(r.random((2, 4, 1, 8, 8)))
        lat = {k: [Tensor(r.standard_normal((2, 3, 4, 4))) for _ in range(2)] for k in ("x", "z", "xi")}
        tgt = {k: [Tensor(r.standard_normal((2, 3, 4, 4))) for _ in range(2)] for k in ("x", "z", "xi")}
        out = compute_losses(pred, truth, lat, tgt, LossWeights(*lam))
        ref = out.L_y.item() + lam[1] * out.L_x.item() + lam[2] * out.L_z.item() + lam[3] * out.L_xi.item()
        worst = max(worst, abs(out.total.item() - ref) / abs(ref))

    weights = load_config("mnist-like").loss
    r = np.random.default_rng(99)
    pred, truth = Tensor(r.random((3, 10, 1, 16, 16))), Tensor(r.random((3, 10, 1, 16, 16)))
    out = compute_losses(pred, truth, None, None, weights)
    e = truth.data - pred.data
    direct = np.mean(np.sum(e * e, axis=(2, 3, 4)) + weights.lambda0 * np.sum(np.abs(e), axis=(2, 3, 4)))
    reduces = (out.total.item() == out.L_y.item() == frame_loss(pred, truth, weights.lambda0).item()
               and out.L_x.item() == out.L_z.item() == out.L_xi.item() == 0.0
               and abs(out.total.item() - direct) <= 1e-12 * direct)
    ok = worst < 1e-12 and reduces
    verdict(capsys, 5, "loss composition", ok,
            f"max relative gap over 20 random weightings {worst:.1e} < 1e-12; "
            f"mnist-like weights reduce the total to the frame loss exactly={reduces}")


# -- 6 -------------------------------------------------------------------------------------
def test_desk_scale_learning(desk_run, capsys):
    d, elapsed = desk_run
    rep = load_report(d / "report.json")
    ratio = rep.aggregate["mse_ratio"]
    frames = " ".join(f"{v:.4f}" for v in rep.per_frame["mse"])
    base = " ".join(f"{v:.4f}" for v in rep.per_frame["mse_persistence"])
    epochs = load_config("mnist-like-desk").training.epochs
    ok = ratio <= 0.5 and epochs <= 50 and len(rep.per_frame["mse"]) == 4
    with capsys.disabled():
        print(f"\n  framewise test MSE : {frames}\n  persistence MSE    : {base}")
    verdict(capsys, 6, "desk-scale learning", ok,
            f"test MSE {rep.aggregate['mse']:.5f} = {ratio:.3f} x persistence {rep.aggregate['mse_persistence']:.5f} "
            f"(limit 0.5) after {epochs} epochs, {elapsed / 60:.1f} min end to end")


# -- 7 -------------------------------------------------------------------------------------
def test_bound_diagnostics(desk_run, cikm_run, capsys):
    ratio_gap = max(abs(rademacher_term(2 * n, 3.7, 1234.5, 0.8) / rademacher_term(n, 3.7, 1234.5, 0.8)
                        - 2 ** (-5 / 8)) for n in (1, 10, 2000, 10**6))
    finite, identity = True, 0.0
    for run, data in ((desk_run[0], "train.stds"), (cikm_run, "data.stds")):
        model, cfg = _load(run / "model.ckpt")
        x = read_dataset(run / data).data[:, : cfg.model.t_in]
        diag = {}
        for n in (len(x), 2 * len(x)):
            diag[n] = bound_diagnostics(bound_inputs_from_model(model, float(np.linalg.norm(x)), n))
        d1, d2 = diag[len(x)], diag[2 * len(x)]
        ratio_gap = max(ratio_gap, abs(d2["rademacher_term"] / d1["rademacher_term"] - 2 ** (-5 / 8)))
        identity = max(identity, abs(d1["R"] - (math.sqrt(d1["R_S"]) + math.sqrt(d1["R_V"])) ** 2) / d1["R"])
        finite &= all(np.isfinite(v) for v in d1.values())
        capsys.readouterr()
        finite &= main(["bound", "--ckpt", str(run / "model.ckpt"), "--data", str(run / data)]) == 0
        cli = json.loads(capsys.readouterr().out)
        finite &= all(np.isfinite(v) for v in cli.values())
    ok = ratio_gap < 1e-12 and identity < 1e-12 and finite
    verdict(capsys, 7, "bound diagnostics", ok,
            f"n vs 2n ratio gap {ratio_gap:.1e}; R identity gap {identity:.1e}; "
            f"all finite for two trained checkpoints={finite}")


# -- 8 -------------------------------------------------------------------------------------
def test_multi_step_recursion(cikm_run, capsys):
    model, cfg = _load(cikm_run / "model.ckpt")
    m = cfg.model
    y = read_dataset(cikm_run / "data.stds").data[20:22, : m.t_in]
    with no_grad():
        chain = model.forecast_sequence(y, m.t_out, xi_handoff="chain")
        recompute = model.forecast_sequence(y, m.t_out, xi_handoff="recompute")
        first = group(chain.frames, m.delta)[:, 0]
        x_first, _ = model.spatial_encode(first)
    two_steps = len(chain.xi_hat) == 2 and chain.frames.shape == (2, m.t_out, m.channels, m.height, m.width)
    consumes = np.array_equal(chain.drivers[1].data, x_first.data)
    gap = float(np.abs(chain.frames.data - recompute.frames.data).max())

    decay_cfg = m.replace(dtype="float64")
    held = {mode: sum(r.holds for r in decay_suite(decay_cfg, 20, 50, handoff=mode))
            for mode in ("chain", "recompute")}
    ok = two_steps and consumes and gap > 0 and all(v == 20 for v in held.values())
    verdict(capsys, 8, "multi-step recursion", ok,
            f"two group steps={two_steps}; step 2 driven by step 1 prediction={consumes}; "
            f"chain vs recompute max frame gap {gap:.2e}; decay envelope holds chain {held['chain']}/20, "
            f"recompute {held['recompute']}/20")
