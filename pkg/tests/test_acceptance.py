"""Release gate: one test per acceptance criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the pass/fail lines.
The overfit and gradient-check tests dominate the runtime (several minutes
each on CPU); everything else finishes in seconds.
"""

import time

import numpy as np
import pytest
import torch

from dmsr.checkpoint import CheckpointError, load_weights, save_weights
from dmsr.config import ModelConfig, TrainConfig
from dmsr.data import (load_image, make_synthetic_dataset, scan_pair_dataset,
                       to_tensor_batch)
from dmsr.gradcheck import grad_check, tiny_config
from dmsr.inference import sliding_window_infer
from dmsr.metrics import psnr_y, ssim_y
from dmsr.model import DMSRNet, FrequencyScaleMixer, build_pyramid_batch
from dmsr.train import _sample_for_step, lr_at, make_optimizer, train_step
from tests.test_metrics import naive_ssim_y


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'pass' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" -- {detail}"
    print(line)
    assert ok, line


def shape_contract(cfg: ModelConfig) -> bool:
    model = DMSRNet(cfg)
    outs = model(*build_pyramid_batch(torch.rand(1, 3, 64, 64)))
    return [tuple(o.shape[-2:]) for o in outs] == [(64, 64), (32, 32), (16, 16)]


def test_shape_contract_suite():
    t0 = time.time()
    ok = all(
        shape_contract(ModelConfig(base_channels=c0, blocks_per_stage=[b] * 6))
        for c0 in (4, 8) for b in (1, 2)
    )
    elapsed = time.time() - t0
    report("shape-contract suite", ok and elapsed < 30, f"{elapsed:.1f}s")


def test_identity_at_zero():
    t0 = time.time()
    torch.manual_seed(0)
    model = DMSRNet(ModelConfig(base_channels=8, blocks_per_stage=[1] * 6))
    model.zero_heads_()
    model.zero_residual_branches_()
    pyramid = build_pyramid_batch(torch.rand(2, 3, 48, 48))
    outs = model(*pyramid)
    ok = all(torch.equal(o, s) for o, s in zip(outs, pyramid))
    elapsed = time.time() - t0
    report("identity-at-zero (bitwise)", ok and elapsed < 10, f"{elapsed:.1f}s")


def test_fft_round_trip():
    t0 = time.time()
    cfg = ModelConfig(base_channels=4, blocks_per_stage=[1] * 6,
                      fdsm_modulation_pw_enabled=False)
    mixer = FrequencyScaleMixer(12, cfg)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        h, w = int(rng.integers(4, 33)), int(rng.integers(4, 33))
        x = torch.from_numpy(rng.standard_normal((1, 12, h, w)).astype(np.float32))
        worst = max(worst, (mixer.freq_mix(x) - x).abs().max().item())
    elapsed = time.time() - t0
    report("FFT round-trip (100 tensors)", worst < 1e-5 and elapsed < 10,
           f"max err {worst:.2e}, {elapsed:.1f}s")


def test_gradient_check():
    t0 = time.time()
    rep = grad_check(tiny_config(), tolerance=1e-4, seed=0, num_coords=8, h=1e-5)
    elapsed = time.time() - t0
    report("gradient check", rep.passed and elapsed < 300,
           f"max rel err {rep.max_rel_err:.2e}, {elapsed:.0f}s")


def _run_overfit(steps: int, cfg: ModelConfig, pairs, seed: int = 0):
    """Deterministic training run; returns (model, mean PSNR-Y gain in dB)."""
    base = float(np.mean([psnr_y(r, g) for r, g in pairs]))
    torch.manual_seed(seed)
    model = DMSRNet(cfg)
    tc = TrainConfig(lr0=2e-4, lambda_freq=0.1, warmup_epochs=3,
                     total_epochs=steps, batch=8, patch=64, seed=seed)
    opt = make_optimizer(model, tc)
    sample_index = 0
    for step in range(steps):
        samples = []
        for _ in range(tc.batch):
            samples.append(_sample_for_step(pairs, tc, sample_index))
            sample_index += 1
        rainy, clean = to_tensor_batch(samples)
        train_step(model, opt, rainy, clean, tc, step, steps_per_epoch=1)
    trained = float(np.mean([
        psnr_y(sliding_window_infer(model, r, 64, 8), g) for r, g in pairs]))
    return model, trained - base


@pytest.fixture(scope="module")
def overfit_pairs(tmp_path_factory):
    root = tmp_path_factory.mktemp("overfit")
    make_synthetic_dataset(root, 8, seed=0)
    return [(load_image(r), load_image(g)) for r, g in scan_pair_dataset(root)]


def test_overfit_smoke(overfit_pairs):
    t0 = time.time()
    cfg = ModelConfig(base_channels=8, blocks_per_stage=[1] * 6)
    model, gain = _run_overfit(300, cfg, overfit_pairs)
    # determinism: replaying a short run from the same seed matches bitwise
    m2, _ = _run_overfit(6, cfg, overfit_pairs)
    m3, _ = _run_overfit(6, cfg, overfit_pairs)
    deterministic = all(torch.equal(a, b) for a, b in
                        zip(m2.state_dict().values(), m3.state_dict().values()))
    elapsed = time.time() - t0
    report("overfit smoke (>= 3 dB)", gain >= 3.0 and deterministic and elapsed < 600,
           f"gain {gain:+.2f} dB, {elapsed:.0f}s")


def test_metric_oracles():
    rng = np.random.default_rng(0)
    a = rng.uniform(0.0, 0.4, (24, 24, 3))

    # constant Y offsets: add a constant to all RGB channels; Y is affine in
    # RGB with coefficients summing to 219/255, so scale the offset back up
    scale = 255.0 / 219.0
    ok = True
    for delta, expected in ((0.1, 20.0), (0.5, 6.020599913279624)):
        ok &= abs(psnr_y(a, a + delta * scale) - expected) < 1e-6

    ok &= abs(ssim_y(a.astype(np.float32), a.astype(np.float32)) - 1.0) < 1e-9

    worst = 0.0
    for i in range(10):
        r = np.random.default_rng(100 + i)
        x = r.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        y = r.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        worst = max(worst, abs(ssim_y(x, y) - naive_ssim_y(x, y)))
    ok &= worst < 1e-7
    report("metric oracles", ok, f"ssim oracle max err {worst:.2e}")


def test_lr_schedule():
    tc = TrainConfig(lr0=2e-4, eta_min=1e-6, warmup_epochs=3, total_epochs=30)
    spe = 10
    warm = tc.warmup_epochs * spe
    total_anneal = tc.total_epochs * spe - warm
    end_warmup = lr_at(warm - 1, spe, tc)
    final = lr_at(tc.total_epochs * spe - 1, spe, tc)
    mid = lr_at(warm - 1 + total_anneal // 2, spe, tc)
    ok = (abs(end_warmup - tc.lr0) < 1e-12
          and abs(final - tc.eta_min) < 1e-12
          and abs(mid - (tc.eta_min + 0.5 * (tc.lr0 - tc.eta_min))) < 1e-12)
    report("LR schedule closed form", ok,
           f"warmup end {end_warmup:.1e}, final {final:.1e}")


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(0)
    cfg = tiny_config()
    model = DMSRNet(cfg)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(torch.randn_like(p) * 0.01)
    path = tmp_path / "ckpt"
    save_weights(model, cfg, path)
    tensors, _ = load_weights(path)
    ok = all(torch.equal(tensors[name], t) for name, t in
             model.state_dict().items() if "num_batches_tracked" not in name)

    blob = (path / "weights.bin").read_bytes()
    (path / "weights.bin").write_bytes(blob[:-8])
    try:
        load_weights(path)
        corrupted_detected = False
    except CheckpointError:
        corrupted_detected = True
    report("checkpoint round-trip + corruption", ok and corrupted_detected)


def test_ablation_constructibility():
    t0 = time.time()
    rows = []
    # MPSRM internal scales: no branches / rate-4 only / rate-2 only / both
    for rates in ([], [4], [2], [4, 2]):
        rows.append(ModelConfig(base_channels=4, blocks_per_stage=[1] * 6,
                                mpsrm_pool_rates=rates))
    # FDSM kernel sets, including the uniform 3+3+3 row
    for kernels in ([3], [3, 5], [3, 5, 7], [3, 3, 3]):
        rows.append(ModelConfig(base_channels=4, blocks_per_stage=[1] * 6,
                                fdsm_kernels=kernels))
    # MPSRM elements: SPGA / its skip connection / tail 3x3 conv
    for spga, skip, tail in ((False, False, False), (True, False, False),
                             (True, True, False), (True, True, True)):
        rows.append(ModelConfig(base_channels=4, blocks_per_stage=[1] * 6,
                                spga_enabled=spga, spga_skip_enabled=skip,
                                mpsrm_tail_conv_enabled=tail))
    # FDSM elements: multi-kernel conv / FFT path / modulation point-wise conv
    for kernels, fft, pw in (([3], True, True), ([3, 5, 7], False, False),
                             ([3, 5, 7], True, False), ([3, 5, 7], True, True)):
        rows.append(ModelConfig(base_channels=4, blocks_per_stage=[1] * 6,
                                fdsm_kernels=kernels, fdsm_fft_enabled=fft,
                                fdsm_modulation_pw_enabled=pw))
    ok = all(shape_contract(cfg) for cfg in rows)
    elapsed = time.time() - t0
    report("ablation constructibility", ok, f"{len(rows)} rows, {elapsed:.1f}s")


def test_ablation_kernel_comparison_informational(overfit_pairs):
    # non-gating: mirrors the kernel-set ablation axis on a reduced overfit run
    gains = {}
    for kernels in ([3], [3, 5, 7]):
        cfg = ModelConfig(base_channels=8, blocks_per_stage=[1] * 6,
                          fdsm_kernels=kernels)
        _, gains[tuple(kernels)] = _run_overfit(60, cfg, overfit_pairs)
    print(f"[info] kernel ablation (60 steps): "
          f"[3] {gains[(3,)]:+.2f} dB vs [3,5,7] {gains[(3, 5, 7)]:+.2f} dB")
    report("ablation kernel comparison (informational)", True,
           "reported above; non-gating")


def test_tiling_consistency():
    torch.manual_seed(0)
    model = DMSRNet(tiny_config())  # default init: exact identity network
    img = np.random.default_rng(0).uniform(0, 1, (70, 54, 3)).astype(np.float32)
    # tiles divisible by 16 so every pyramid level admits the rate-4 pooling
    outs = [sliding_window_infer(model, img, tile, overlap)
            for tile, overlap in ((64, 16), (32, 8), (48, 0), (16, 12))]
    worst = max(float(np.abs(o - img).max()) for o in outs)
    report("tiling consistency", worst < 1e-6, f"max dev {worst:.2e}")
