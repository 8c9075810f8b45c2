import numpy as np
import pytest

from vidcompress import tensor as T
from vidcompress.codec import LATENT_CHANNELS, Codec, FrozenCodecError, pretrain_codec
from vidcompress.gradcheck import grad_check
from vidcompress.optim import Adam
from vidcompress.tensor import ShapeError, Tensor


def test_shapes_and_storage_ratio():
    c = Codec(np.random.default_rng(0))
    z = c.encode(Tensor(np.zeros((3, 32, 32))))
    assert z.shape == (LATENT_CHANNELS, 8, 8)
    assert c.decode(z).shape == (3, 32, 32)
    assert z.size * 12 == 3 * 32 * 32


def test_decode_range_for_extreme_latents():
    c = Codec(np.random.default_rng(0))
    out = c.decode(Tensor(np.random.default_rng(1).normal(0, 100, (2, 4, 4, 4)))).data
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_bad_shapes():
    c = Codec(np.random.default_rng(0))
    with pytest.raises(ShapeError):
        c.encode(Tensor(np.zeros((3, 10, 8))))
    with pytest.raises(ShapeError):
        c.decode(Tensor(np.zeros((3, 2, 2))))


def test_freeze_blocks_updates_and_is_idempotent():
    c = Codec(np.random.default_rng(0)).freeze()
    d = c.frozen_digest
    assert c.freeze().frozen_digest == d
    with pytest.raises(FrozenCodecError):
        c.trainable_parameters()
    with pytest.raises(FrozenCodecError):
        c.load_flat(np.zeros_like(c.flat()))
    with pytest.raises(ValueError):
        Adam(c.parameters())
    with pytest.raises(ValueError):
        c.enc1_w.data[0, 0, 0, 0] = 1.0


def test_unfrozen_codec_is_refused_by_pipeline_checks():
    with pytest.raises(FrozenCodecError):
        Codec(np.random.default_rng(0)).require_frozen()


def test_gradients_flow_through_frozen_decoder_not_into_it():
    c = Codec(np.random.default_rng(0)).freeze()
    z = T.parameter(np.random.default_rng(1).normal(size=(4, 2, 2)))
    T.mean(c.decode(z)).backward()
    assert np.abs(z.grad).sum() > 0
    assert all(p.grad is None for p in c.parameters())


def test_decode_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    c = Codec(rng).to(np.float64).freeze()
    with T.precision(np.float64):
        z = T.parameter(rng.normal(size=(1, 4, 2, 2)))
        probe = Tensor(rng.normal(size=(1, 3, 8, 8)))
        report = grad_check(lambda: T.sum(T.mul(c.decode(z), probe)), [z], skip_kinks=True)
    assert report.ok and report.n_checked > 8


def test_constant_corpus_is_learned():
    corpus = np.full((64, 3, 8, 8), 0.4, dtype=np.float32)
    codec, mse = pretrain_codec(corpus, 60, np.random.default_rng(0), batch_size=32, lr=1e-2)
    assert mse < 1e-4


def test_zero_epochs_returns_init_with_evaluated_mse():
    corpus = np.random.default_rng(0).uniform(0, 1, (8, 3, 8, 8)).astype(np.float32)
    codec, mse = pretrain_codec(corpus, 0, np.random.default_rng(5))
    assert codec.digest() == Codec(np.random.default_rng(5)).digest()
    assert mse == pytest.approx(codec.reconstruction_mse(corpus))


def test_pretraining_is_deterministic():
    corpus = np.random.default_rng(0).uniform(0, 1, (16, 3, 8, 8)).astype(np.float32)
    a, _ = pretrain_codec(corpus, 2, np.random.default_rng(1), batch_size=8)
    b, _ = pretrain_codec(corpus, 2, np.random.default_rng(1), batch_size=8)
    assert a.digest() == b.digest()


def test_save_load_round_trip(tmp_path):
    c = Codec(np.random.default_rng(0)).freeze()
    c.save(tmp_path / "codec")
    d = Codec.load(tmp_path / "codec")
    assert d.frozen and d.frozen_digest == c.frozen_digest
    raw = bytearray((tmp_path / "codec.vct").read_bytes())
    raw[-1] ^= 0xFF
    (tmp_path / "codec.vct").write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="digest"):
        Codec.load(tmp_path / "codec")
