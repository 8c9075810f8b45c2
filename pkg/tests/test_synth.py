import json
from collections import Counter

import numpy as np
import pytest

from vidcompress import synth as S
from vidcompress.classifiers import build_classifier
from vidcompress.evaluate import EvalConfig, gather, predict, redundancy_matrices, train_from_scratch
from vidcompress.synth import DatasetError, GeneratorConfig, SplitLeakError


def test_paired_videos_differ_only_inside_the_window(small_data):
    train, _ = small_data
    for i in range(0, len(train), 2):
        a, b = train.frames[i], train.frames[i + 1]
        assert train.labels[i] // 2 == train.labels[i + 1] // 2 and train.labels[i] != train.labels[i + 1]
        s, e = train.windows[i]
        assert tuple(train.windows[i + 1]) == (s, e)
        outside = [t for t in range(len(a)) if not s <= t < e]
        assert a[outside].tobytes() == b[outside].tobytes()
        assert not np.array_equal(a[s:e], b[s:e])


def test_ranges_and_windows(small_cfg, small_data):
    for split in small_data:
        assert split.frames.min() >= 0.0 and split.frames.max() <= 1.0
        assert split.frames.dtype == np.float32
        s = split.windows[:, 0]
        assert np.all(s >= 0) and np.all(s <= small_cfg.frames - small_cfg.event_width)
        assert np.all(split.windows[:, 1] - s == small_cfg.event_width)


def test_event_starts_cover_the_range():
    train = S.generate_split(GeneratorConfig(train_per_class=60, test_per_class=1, frames=8, height=16, width=16), "train")
    starts = Counter(train.windows[::2, 0].tolist())
    assert set(starts) == set(range(7))


@pytest.mark.parametrize("bad", [dict(classes=3), dict(classes=0), dict(event_width=0), dict(event_width=17),
                                 dict(height=30), dict(train_per_class=0), dict(flashes=15), dict(noise_sigma=-1)])
def test_invalid_configs(bad):
    with pytest.raises(DatasetError):
        GeneratorConfig(**bad).validate()


def test_files_are_deterministic_and_described(tmp_path):
    cfg = GeneratorConfig(classes=4, train_per_class=2, test_per_class=1, frames=6, height=16, width=16, seed=3)
    m1 = S.generate_dataset(cfg, tmp_path / "a")
    S.generate_dataset(cfg, tmp_path / "b")
    for name in ("manifest.json", "train_frames.vct", "test_frames.vct"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    m = S.load_manifest(tmp_path / "a")
    assert m["counts"]["train"] == {str(c): 2 for c in range(4)}
    assert m["event_width"] == 2 and m["frames"] == 6 and m["seed"] == 3
    text = (tmp_path / "a" / "manifest.json").read_text()
    assert list(json.loads(text)) == sorted(json.loads(text))
    assert m1["files"] == m["files"]


def test_loader_counts_disjointness_and_shuffle(tmp_path):
    cfg = GeneratorConfig(classes=4, train_per_class=3, test_per_class=2, frames=6, height=16, width=16)
    m = S.generate_dataset(cfg, tmp_path)
    train = list(S.split_loader(m, "train"))
    test = list(S.split_loader(m, "test"))
    assert len(train) == 12 and len(test) == 8
    assert not {s.sample_id for s in train} & {s.sample_id for s in test}
    assert all(s.split == "test" for s in test)
    shuffled = list(S.split_loader(m, "train", shuffle_seed=5))
    assert [s.sample_id for s in shuffled] != [s.sample_id for s in train]
    assert sorted(s.sample_id for s in shuffled) == sorted(s.sample_id for s in train)
    again = list(S.split_loader(m, "train", shuffle_seed=5))
    assert [s.sample_id for s in again] == [s.sample_id for s in shuffled]
    by_id = {s.sample_id: s for s in train}
    for s in shuffled:
        assert s.frames.tobytes() == by_id[s.sample_id].frames.tobytes() and s.label == by_id[s.sample_id].label


def test_digest_mismatch_and_unknown_split(tmp_path):
    cfg = GeneratorConfig(classes=2, train_per_class=1, test_per_class=1, frames=4, height=8, width=8)
    m = S.generate_dataset(cfg, tmp_path)
    with pytest.raises(DatasetError):
        S.load_split(m, "validation")
    raw = bytearray((tmp_path / "train_frames.vct").read_bytes())
    raw[-1] ^= 1
    (tmp_path / "train_frames.vct").write_bytes(bytes(raw))
    with pytest.raises(DatasetError, match="digest"):
        S.load_split(m, "train")


def test_test_split_is_refused_by_training_paths(small_data):
    _, test = small_data
    with pytest.raises(SplitLeakError):
        test.require_train()
    with pytest.raises(SplitLeakError):
        S.draw_sources(test, 1, np.random.default_rng(0))


def test_source_draw_is_pair_matched(small_data):
    train, _ = small_data
    picks = S.draw_sources(train, 2, np.random.default_rng(0))
    assert len(picks) == 16
    labels = train.labels[picks]
    assert Counter(labels.tolist()) == {c: 2 for c in range(8)}
    for a in range(0, 8, 2):
        pa = picks[labels == a]
        pb = picks[labels == a + 1]
        assert np.array_equal(pa + 1, pb)  # partner sits right after its pair mate


def test_source_draw_handles_uneven_budgets_and_overflow(small_data):
    train, _ = small_data
    per = [3, 2, 1, 1, 1, 1, 1, 1]
    picks = S.draw_sources(train, per, np.random.default_rng(1))
    assert Counter(train.labels[picks].tolist()) == dict(enumerate(per))
    assert len(set(picks.tolist())) == len(picks)
    with pytest.raises(ValueError, match="exceeds"):
        S.draw_sources(train, 7, np.random.default_rng(0))


def test_source_draw_is_uniform_per_class(small_data):
    train, _ = small_data
    rng = np.random.default_rng(0)
    hits = Counter()
    for _ in range(3000):
        hits.update(S.draw_sources(train, 1, rng)[:1].tolist())
    freq = np.array([hits[i] for i in np.flatnonzero(train.labels == 0)]) / 3000
    np.testing.assert_allclose(freq, 1 / 6, atol=0.03)


def test_frames_outside_the_window_cannot_separate_a_pair(small_data):
    # partners share every out-of-window frame, so any classifier fed only those
    # frames answers identically for both and gets at most half of each pair right
    train, test = small_data

    def outside(split):
        idx = np.array([[t for t in range(16) if not s <= t < e][:4] for s, e in split.windows])
        return gather(split.frames, idx)

    model = train_from_scratch(outside(train), train.labels, EvalConfig(epochs=30), np.random.default_rng(0), 8)
    pred = predict(model, outside(test))
    assert np.array_equal(pred[0::2], pred[1::2])
    member = np.mean((pred % 2) == (test.labels % 2))
    assert member == pytest.approx(0.5)


def test_adjacent_frames_correlate_more_than_distinct_videos(small_data):
    train, _ = small_data
    intra, inter = [], []
    for c in range(8):
        r = redundancy_matrices(train.frames[train.labels == c])
        intra.append(r.mean_adjacent_intra)
        inter.append(r.mean_inter)
    assert np.mean(intra) > np.mean(inter)
