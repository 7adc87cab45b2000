import numpy as np
import pytest

from sidrec.rqvae import st_losses_and_grads, st_reconstruction_grad, st_reconstruction_loss_frozen
from sidrec.rvq import UnderPopulationError, fit


def toy_model():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 6))
    model = fit(x, levels=1, codebook_size=2, mode="rqvae", seed=1, steps=40, hidden=8)
    return model, x


def test_training_loss_finite_every_step():
    model, _ = toy_model()
    assert len(model.loss_curve) == 40
    assert all(np.isfinite(v) for v in model.loss_curve)


def test_straight_through_matches_finite_differences():
    # central differences of the frozen-offset surrogate at 64-bit, eps 1e-5
    model, x = toy_model()
    d_an, offset = st_reconstruction_grad(model.net, model.codebooks, x)
    eps = 1e-5
    rng = np.random.default_rng(2)
    for _ in range(30):
        i, j = int(rng.integers(x.shape[0])), int(rng.integers(x.shape[1]))
        orig = x[i, j]
        x[i, j] = orig + eps
        lp = st_reconstruction_loss_frozen(model.net, x, offset)
        x[i, j] = orig - eps
        lm = st_reconstruction_loss_frozen(model.net, x, offset)
        x[i, j] = orig
        fd = (lp - lm) / (2 * eps)
        rel = abs(fd - d_an[i, j]) / max(1e-8, abs(fd), abs(d_an[i, j]))
        assert rel < 1e-4


def test_decoder_param_grads_match_finite_differences():
    # no sg boundary between decoder parameters and the loss
    model, x = toy_model()
    net, books = model.net, model.codebooks
    _, _, grads, _ = st_losses_and_grads(net, books, x)
    eps = 1e-6
    rng = np.random.default_rng(3)
    params = net.params()
    for name in ("dec.w1", "dec.b1", "dec.w2", "dec.b2"):
        p = params[name]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        orig = p[idx]
        p[idx] = orig + eps
        lp = st_losses_and_grads(net, books, x)[0]
        p[idx] = orig - eps
        lm = st_losses_and_grads(net, books, x)[0]
        p[idx] = orig
        fd = (lp - lm) / (2 * eps)
        rel = abs(fd - grads[name][idx]) / max(1e-6, abs(fd), abs(grads[name][idx]))
        assert rel < 1e-4, name


def test_rqvae_under_population():
    x = np.zeros((5, 3))
    with pytest.raises(UnderPopulationError):
        fit(x, levels=1, codebook_size=2, mode="rqvae", seed=0)


def test_rqvae_mode_encode_decode_consistent():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(30, 5))
    model = fit(x, levels=2, codebook_size=4, mode="rqvae", seed=2, steps=60, hidden=8)
    sid = model.encode(x[0])
    assert len(sid.codes) == 2
    recon = model.decode(sid)
    assert recon.shape == (5,)
    assert np.isfinite(recon).all()


def test_rqvae_training_reduces_loss():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(40, 6))
    model = fit(x, levels=1, codebook_size=4, mode="rqvae", seed=3, steps=200, hidden=16)
    assert model.loss_curve[-1] < model.loss_curve[0]
