import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snnforge.config import EncodingConfig, ExperimentConfig
from snnforge.errors import DataError, PlacementError
from snnforge.yinyang import (DOTS, OUTSIDE, YANG, YIN, build_network, classify_point,
                              encode_batch, encode_sample, evaluate, make_dataset,
                              seed_streams, train_seed)

from oracles import yinyang_area_fractions, yinyang_label

coord = st.floats(0.0, 1.0, allow_nan=False)


def unit_times(train, entry=0):
    """Spike time per input unit of one batch entry."""
    sel = train.batch == entry
    out = np.full(5, np.nan)
    out[train.units[sel]] = train.times[sel]
    return out


@given(coord, coord)
def test_classifier_matches_reference(x, y):
    assert classify_point(x, y) == yinyang_label(x, y)


def test_classifier_matches_reference_on_dense_grid():
    g = np.linspace(0, 1, 301)
    xx, yy = np.meshgrid(g, g)
    got = classify_point(xx, yy)
    want = np.vectorize(yinyang_label)(xx, yy)
    np.testing.assert_array_equal(got, want)


@pytest.mark.parametrize("point,label", [
    ((0.25, 0.5), DOTS), ((0.75, 0.5), DOTS), ((0.02, 0.02), OUTSIDE),
    ((0.5, 0.9), YIN), ((0.5, 0.1), YANG)])
def test_known_points(point, label):
    assert classify_point(*point) == label == yinyang_label(*point)


@given(coord, coord)
def test_point_symmetry_swaps_yin_and_yang(x, y):
    a, b = int(classify_point(x, y)), int(classify_point(1 - x, 1 - y))
    # the S-curve boundary itself is closed on one side only
    d = [np.hypot(x - c, y - 0.5) for c in (0.25, 0.75)]
    if min(abs(di - r) for di in d for r in (0.1, 0.25)) < 1e-9 or abs(y - 0.5) < 1e-12:
        return
    swap = {YIN: YANG, YANG: YIN, DOTS: DOTS, OUTSIDE: OUTSIDE}
    assert b == swap[a]


def test_area_fractions_over_a_million_points():
    rng = np.random.default_rng(7)
    labels = np.empty(0, dtype=int)
    while len(labels) < 10**6:
        xy = rng.random((400_000, 2))
        lab = classify_point(xy[:, 0], xy[:, 1])
        labels = np.concatenate([labels, lab[lab != OUTSIDE]])
    labels = labels[:10**6]
    frac = np.bincount(labels, minlength=3) / len(labels)
    np.testing.assert_allclose(frac, yinyang_area_fractions(), atol=0.005)


def test_dataset_balanced_and_reproducible():
    xy, y = make_dataset(1200, 3)
    assert np.bincount(y).tolist() == [400, 400, 400]
    np.testing.assert_array_equal(classify_point(xy[:, 0], xy[:, 1]), y)
    xy2, y2 = make_dataset(1200, 3)
    np.testing.assert_array_equal(xy, xy2)
    np.testing.assert_array_equal(y, y2)
    # shuffled, not grouped by class
    assert len(set(y[:30].tolist())) == 3


def test_train_and_test_sets_are_disjoint():
    streams = seed_streams(0, 0)
    train, _ = make_dataset(4800, streams["train_data"])
    test, _ = make_dataset(1200, streams["test_data"])
    assert not {tuple(p) for p in train} & {tuple(p) for p in test}


def test_seed_streams_differ_between_seeds():
    a = seed_streams(0, 0)["init"].random(4)
    b = seed_streams(0, 1)["init"].random(4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, seed_streams(0, 0)["init"].random(4))


def test_dataset_size_must_be_multiple_of_three():
    with pytest.raises(DataError):
        make_dataset(100, 0)


def test_encoding_endpoints_and_midpoint():
    cfg = EncodingConfig()
    train = encode_sample(0.0, 0.0, cfg)
    np.testing.assert_allclose(unit_times(train), [4.0, 2.0, 2.0, 42.0, 42.0])
    np.testing.assert_array_equal(np.sort(train.units), [0, 1, 2, 3, 4])
    np.testing.assert_allclose(unit_times(encode_sample(0.5, 0.5, cfg))[1:], 22.0)


def test_encoding_affine_value():
    assert unit_times(encode_sample(0.3, 0.8))[1] == pytest.approx(14.0)


@given(coord, coord)
def test_encoding_has_five_events_in_window(x, y):
    cfg = EncodingConfig()
    train = encode_sample(x, y, cfg)
    times = unit_times(train)
    assert len(train.times) == 5 and sorted(train.units) == [0, 1, 2, 3, 4]
    assert times[0] == cfg.t_bias
    assert np.all((times[1:] >= cfg.t_early) & (times[1:] <= cfg.t_late))


@given(coord, coord)
def test_encoding_swap_exchanges_units(x, y):
    a = unit_times(encode_sample(x, y))
    b = unit_times(encode_sample(1 - x, 1 - y))
    np.testing.assert_allclose(a[[0, 3, 4, 1, 2]], b, atol=1e-12)


def test_encode_batch_indexes_batches():
    train = encode_batch(np.array([[0.1, 0.2], [0.3, 0.4]]))
    assert np.bincount(train.batch).tolist() == [5, 5]
    np.testing.assert_allclose(unit_times(train, 1)[1:], [14.0, 18.0, 30.0, 26.0])


@pytest.mark.parametrize("backend", ["mock", "emulator"])
def test_untrained_network_is_at_chance(backend):
    config = ExperimentConfig(backend=backend)
    streams = seed_streams(0, 0)
    xy, y = make_dataset(1200, streams["test_data"])
    net = build_network(config, streams["init"], backend == "mock")
    assert evaluate(net, xy, y, config) == pytest.approx(1 / 3, abs=0.05)


def test_hidden_layer_beyond_chip_is_rejected():
    config = ExperimentConfig(backend="emulator")
    config.network.hidden = 600
    net = build_network(config, np.random.default_rng(0), mock=False)
    with pytest.raises(PlacementError):
        net.instance.extract_topology()


def test_dropout_network_trains_one_epoch():
    config = ExperimentConfig()
    config.network.dropout = 0.1
    config.dataset.train_size = 300
    config.dataset.test_size = 150
    result = train_seed(config, 0, epochs=1)
    assert len(result.test_accuracy) == 2 and np.isfinite(result.train_loss[0][1])


def test_loss_decreases_over_first_ten_epochs_in_most_seeds():
    config = ExperimentConfig()
    decreased = 0
    for seed in range(15):
        losses = [v for _, v in train_seed(config, seed, epochs=10).train_loss]
        decreased += losses[-1] < losses[0]
    assert decreased >= 14
