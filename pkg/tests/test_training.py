import numpy as np
import pytest

from erd_motion import training
from erd_motion.erd_model import ErdConfig, ErdModel
from erd_motion.errors import ArgumentError
from erd_motion.mocap_data import NoiseSchedule
from erd_motion.synthetic import sine_corpus
from erd_motion.training import (STREAMS, TrainConfig, TrainingDiverged, evaluate_loss,
                                 seed_streams, train, window_arrays)


def tiny_setup(seed=0, epochs=4, sigma=0.2, head="gmm", lr=3e-3):
    _, seqs = sine_corpus(3, 3, 60, seed=1)
    seqs = [s / 2 for s in seqs]
    streams = seed_streams(seed)
    model = ErdModel(ErdConfig(3, [8], [8], [8], output_head=head, gmm_components=2), streams["init"])
    cfg = TrainConfig(lr, 0.9, epochs, window_len=10, stride=5, batch_size=4,
                      noise=NoiseSchedule(sigma, 0.5))
    return model, seqs, cfg, streams


def test_seed_streams_are_independent_and_reproducible():
    a, b = seed_streams(7), seed_streams(7)
    assert set(a) == set(STREAMS)
    draws = {k: a[k].random(4) for k in STREAMS}
    assert all(np.array_equal(draws[k], b[k].random(4)) for k in STREAMS)
    assert len({tuple(v) for v in draws.values()}) == len(STREAMS)


def test_window_arrays_shapes_and_skipping():
    seqs = [np.arange(12.0)[:, None], np.arange(3.0)[:, None]]
    x, y = window_arrays(seqs, 4, 4)
    assert x.shape == (2, 4, 1)
    np.testing.assert_array_equal(y, x + 1)
    with pytest.raises(ArgumentError):
        window_arrays([np.zeros((3, 1))], 4, 1)


def test_config_validation():
    with pytest.raises(ArgumentError):
        TrainConfig(epochs=0)
    with pytest.raises(ArgumentError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ArgumentError):
        TrainConfig(lr_decay=0.0)


def test_epoch_zero_is_clean_and_schedule_ramps():
    model, seqs, cfg, streams = tiny_setup(epochs=6, sigma=0.3)
    hist = train(model, seqs, cfg, streams["noise"], streams["shuffle"])
    sig = [h.sigma for h in hist]
    assert sig[0] == 0.0 and sig[-1] == 0.3
    assert all(b >= a for a, b in zip(sig, sig[1:]))


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        model, seqs, cfg, streams = tiny_setup(seed=3)
        hist = train(model, seqs, cfg, streams["noise"], streams["shuffle"])
        runs.append(([h.loss for h in hist], model.parameters()["lstm0.w_x"].value.copy()))
    assert runs[0][0] == runs[1][0]
    assert np.array_equal(runs[0][1], runs[1][1])


def test_training_reduces_loss():
    model, seqs, cfg, streams = tiny_setup(epochs=30, sigma=0.0, lr=1e-2)
    before = evaluate_loss(model, seqs, 10, 5)
    train(model, seqs, cfg, streams["noise"], streams["shuffle"])
    assert evaluate_loss(model, seqs, 10, 5) < before


def test_inputs_are_corrupted_and_targets_clean(monkeypatch):
    model, seqs, cfg, streams = tiny_setup(epochs=2, sigma=0.5, head="euclidean")
    cfg.noise = NoiseSchedule(0.5, 0.5)
    clean_x, clean_y = window_arrays(seqs, cfg.window_len, cfg.stride)
    seen = []
    real = training.sequence_loss

    def spy(model, x, y, **kw):
        seen.append((x.copy(), y.copy()))
        return real(model, x, y, **kw)
    monkeypatch.setattr(training, "sequence_loss", spy)
    train(model, seqs, cfg, streams["noise"], streams["shuffle"])
    targets = {t.tobytes() for t in clean_y}
    inputs = {t.tobytes() for t in clean_x}
    for epoch_batches, noisy in ((seen[:len(seen) // 2], False), (seen[len(seen) // 2:], True)):
        for x, y in epoch_batches:
            for b in range(y.shape[1]):
                assert y[:, b].tobytes() in targets
                assert (x[:, b].tobytes() not in inputs) == noisy


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    model, seqs, cfg, streams = tiny_setup(epochs=3)
    model.net.decoder[-1].b.value[:] = np.inf
    with pytest.raises(TrainingDiverged) as err:
        train(model, seqs, cfg, streams["noise"], streams["shuffle"])
    assert err.value.epoch == 0 and "epoch 0" in str(err.value)


def test_clipping_is_recorded():
    model, seqs, cfg, streams = tiny_setup(epochs=1)
    cfg.clip_threshold = 1e-6
    hist = train(model, seqs, cfg, streams["noise"], streams["shuffle"])
    assert hist[0].clipped_fraction == 1.0
