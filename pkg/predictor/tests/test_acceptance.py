"""Acceptance criteria for the predictor, one test per criterion."""

import numpy as np
import pytest
import torch

from conftest import synth_sample, write_dataset
from plpredict.data import Manifest, load_samples
from plpredict.losses import masked_rmse
from plpredict.model import ResidualRegressor
from plpredict.normalize import compute_stats
from plpredict.predict import predict_residual, reconstruct
from plpredict.train import TrainConfig, train


def test_overfit_five_samples_under_one_db(tmp_path, rng):
    """Masked RMSE reaches < 1 dB on 5 samples within the 500-step budget."""
    samples = {f"sceneA_tx{i:02d}": synth_sample(rng) for i in range(5)}
    path = tmp_path / "overfit.h5"
    write_dataset(path, samples)
    manifest = Manifest(train=[("sceneA", sid) for sid in sorted(samples)],
                        val=[], test=[])
    cfg = TrainConfig(epochs=100, batch_size=2, learning_rate=3e-3,
                      weight_decay=0.0, seed=0, patience=1000, max_steps=200)
    result = train(path, manifest, cfg)
    best = min(h["train_rmse_db"] for h in result.history)
    assert result.steps <= 500
    assert best < 1.0, f"best masked RMSE {best:.3f} dB after {result.steps} steps"
    assert all(np.isfinite(h["train_rmse_db"]) for h in result.history)


def test_shape_identity_crop_predict_pad(dataset):
    """crop(predict(pad(x))) has x's spatial dims for all valid inputs."""
    path, _, _ = dataset
    samples = load_samples(path)
    stats = compute_stats(s.features for s in samples)
    torch.manual_seed(0)
    model = ResidualRegressor(base_channels=8)
    for s in samples:
        stack = predict_residual(s, model, stats, pad_target=(32, 24, 16))
        assert stack.shape == (len(s.heights_m), *s.dims[:2])
        assert np.isfinite(reconstruct(stack, s.fspl_db)).all()


def test_masked_loss_ignores_invalid_cells(rng):
    """Perturbing truth outside the mask leaves loss and gradient unchanged."""
    pred = torch.from_numpy(rng.normal(size=(4, 6, 6)).astype(np.float64))
    pred.requires_grad_(True)
    truth = torch.from_numpy(rng.normal(size=(4, 6, 6)).astype(np.float64))
    mask = torch.from_numpy((rng.random((4, 6, 6)) > 0.5).astype(np.float64))
    loss_a = masked_rmse(pred, truth, mask)
    loss_a.backward()
    grad_a = pred.grad.detach().clone()

    pred2 = pred.detach().clone().requires_grad_(True)
    truth2 = truth.clone()
    truth2[mask == 0] = 1e9
    loss_b = masked_rmse(pred2, truth2, mask)
    loss_b.backward()
    assert loss_a.item() == pytest.approx(loss_b.item(), abs=0.0)
    torch.testing.assert_close(grad_a, pred2.grad, rtol=0.0, atol=0.0)


def test_gradient_check_two_voxel_network(rng):
    """Analytic gradients of masked RMSE match central differences to 1e-4
    relative on a two-voxel toy network."""
    x = torch.from_numpy(rng.normal(size=(1, 2)).astype(np.float64))
    target = torch.from_numpy(rng.normal(size=(1, 2)).astype(np.float64))
    mask = torch.tensor([[1.0, 0.0]], dtype=torch.float64)  # one cell masked out
    torch.manual_seed(5)
    net = torch.nn.Linear(2, 2, dtype=torch.float64)
    masked_rmse(net(x), target, mask).backward()
    eps = 1e-6
    checked = 0
    for param in net.parameters():
        grad = param.grad.view(-1)
        flat = param.data.view(-1)
        for i in range(flat.numel()):
            keep = flat[i].item()
            flat[i] = keep + eps
            up = masked_rmse(net(x), target, mask).item()
            flat[i] = keep - eps
            down = masked_rmse(net(x), target, mask).item()
            flat[i] = keep
            numeric = (up - down) / (2 * eps)
            analytic = grad[i].item()
            scale = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / scale <= 1e-4
            checked += 1
    assert checked == 6  # 2x2 weights + 2 biases
