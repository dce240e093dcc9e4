import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import brute_bin, decode_record_bits
from sast_snn.errors import MalformedFileError, OutOfRangeError
from sast_snn.events import (
    EventStream,
    SyntheticSpec,
    bin_events,
    class_stratified_split,
    drop_events,
    load_dataset_dir,
    make_synthetic_dataset,
    parse_nmnist_file,
    raw_counts,
    serialize_nmnist,
    write_dataset_dir,
)

event_lists = st.lists(
    st.tuples(st.integers(0, (1 << 23) - 1), st.integers(0, 33), st.integers(0, 33), st.integers(0, 1)),
    max_size=60,
)


def test_parse_single_record():
    rec = bytes([0x0A, 0x05, 0x80, 0x00, 0x64])
    assert decode_record_bits(rec) == (100, 10, 5, 1)
    s = parse_nmnist_file(rec, 34, 34)
    assert len(s) == 1
    e = s[0]
    assert (e.x, e.y, e.polarity, e.timestamp) == (10, 5, 1, 100)


def test_parse_empty_and_malformed():
    assert len(parse_nmnist_file(b"", 34, 34)) == 0
    with pytest.raises(MalformedFileError):
        parse_nmnist_file(bytes(7), 34, 34)


def test_parse_out_of_range_names_record():
    data = bytes([1, 1, 0, 0, 1]) + bytes([40, 1, 0, 0, 2])
    with pytest.raises(OutOfRangeError, match="record 1"):
        parse_nmnist_file(data, 34, 34)


def test_parse_sorts_stably():
    data = bytes([1, 1, 0, 0, 9]) + bytes([2, 2, 0, 0, 3]) + bytes([3, 3, 0x80, 0, 3])
    s = parse_nmnist_file(data, 34, 34)
    assert s.t.tolist() == [3, 3, 9]
    assert s.x.tolist() == [2, 3, 1]


@settings(max_examples=50, deadline=None)
@given(event_lists)
def test_parse_matches_bit_decoder(events):
    s = EventStream.from_events(events, 34, 34)
    blob = serialize_nmnist(s)
    recs = [decode_record_bits(blob[i:i + 5]) for i in range(0, len(blob), 5)]
    parsed = parse_nmnist_file(blob, 34, 34)
    assert [tuple(e) for e in parsed] == recs


@settings(max_examples=50, deadline=None)
@given(event_lists)
def test_serialize_round_trip(events):
    s = EventStream.from_events(events, 34, 34)
    back = parse_nmnist_file(serialize_nmnist(s), 34, 34, duration=s.duration)
    assert back.same_as(s)


def test_bin_single_event_midpoint():
    s = EventStream.from_events([(500, 0, 0, 1)], 4, 4, duration=1000)
    f = bin_events(s, 10)
    assert f.shape == (10, 32)
    assert f[5, 16] == 1.0
    assert f.sum() == 1.0


def test_bin_empty_stream():
    s = EventStream.from_events([], 4, 4, duration=1000)
    f = bin_events(s, 10)
    assert f.shape == (10, 32) and not f.any()


def test_bin_normalizes_by_max():
    s = EventStream.from_events([(10, 1, 1, 0), (20, 1, 1, 0), (30, 2, 2, 1)], 4, 4, duration=1000)
    f = bin_events(s, 10)
    assert f[0, 1 * 4 + 1] == 1.0
    assert f[0, 16 + 2 * 4 + 2] == 0.5


def test_bin_endpoint_lands_in_last_bin():
    s = EventStream.from_events([(1000, 0, 0, 0)], 4, 4, duration=1000)
    assert bin_events(s, 10)[9, 0] == 1.0


def test_bin_zero_duration_uses_first_bin():
    s = EventStream.from_events([(0, 0, 0, 0), (0, 1, 0, 0)], 4, 4, duration=0)
    f = bin_events(s, 10)
    assert f[0].sum() == 2.0 and f[1:].sum() == 0.0


def test_bin_rejects_late_event():
    s = EventStream(np.array([5, 2000]), np.array([0, 0]), np.array([0, 0]), np.array([0, 0]), 4, 4, 1000)
    with pytest.raises(OutOfRangeError):
        bin_events(s, 10)


@settings(max_examples=50, deadline=None)
@given(event_lists, st.integers(1, 12))
def test_binning_matches_brute_force_and_conserves_mass(events, n_steps):
    s = EventStream.from_events(events, 34, 34)
    counts = raw_counts(s, n_steps)
    assert counts.sum() == len(events)
    np.testing.assert_array_equal(counts, brute_bin(list(zip(s.t, s.x, s.y, s.p)), n_steps, 34, 34, s.duration))
    f = bin_events(s, n_steps)
    assert f.min() >= 0.0 and f.max() <= 1.0


@settings(max_examples=30, deadline=None)
@given(event_lists, st.randoms(use_true_random=False))
def test_binning_invariant_to_same_timestamp_permutation(events, rnd):
    s = EventStream.from_events(events, 34, 34, duration=(1 << 23))
    base = bin_events(s, 10)
    perm = list(range(len(events)))
    rnd.shuffle(perm)
    shuffled = [events[i] for i in perm]
    np.testing.assert_array_equal(base, bin_events(EventStream.from_events(shuffled, 34, 34, duration=1 << 23), 10))


def _stream(n, seed=0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 100_000, n))
    return EventStream(t, rng.integers(0, 34, n), rng.integers(0, 34, n), rng.integers(0, 2, n), 34, 34, 100_000)


def test_drop_extremes():
    s = _stream(500)
    assert drop_events(s, 0.0, 3).same_as(s)
    empty = drop_events(s, 1.0, 3)
    assert len(empty) == 0 and empty.duration == s.duration


def test_drop_rate_band():
    s = _stream(10_000)
    kept = len(drop_events(s, 0.3, 42))
    assert 6700 <= kept <= 7300


def test_drop_preserves_order_and_is_seeded():
    s = _stream(1000)
    a = drop_events(s, 0.5, 9)
    assert np.all(np.diff(a.t) >= 0)
    assert a.same_as(drop_events(s, 0.5, 9))
    with pytest.raises(ValueError):
        drop_events(s, 1.5, 0)


def test_synthetic_determinism_and_counts():
    a = make_synthetic_dataset(SyntheticSpec(classes=2, samples_per_class=1, seed=7))
    b = make_synthetic_dataset(SyntheticSpec(classes=2, samples_per_class=1, seed=7))
    assert a.frames.tobytes() == b.frames.tobytes()
    assert np.array_equal(a.labels, b.labels)
    c = make_synthetic_dataset(SyntheticSpec(classes=3, samples_per_class=10))
    assert len(c) == 30
    assert np.bincount(c.labels).tolist() == [10, 10, 10]


def test_synthetic_rejects_bad_spec():
    with pytest.raises(ValueError):
        make_synthetic_dataset(SyntheticSpec(classes=1))
    with pytest.raises(ValueError):
        make_synthetic_dataset(SyntheticSpec(samples_per_class=0))


def nearest_centroid_accuracy(train, test):
    x_tr = train.frames.reshape(len(train), -1)
    x_te = test.frames.reshape(len(test), -1)
    cents = np.stack([x_tr[train.labels == c].mean(0) for c in range(train.num_classes)])
    d = ((x_te[:, None, :] - cents[None]) ** 2).sum(-1)
    return float(np.mean(np.argmin(d, axis=1) == test.labels))


def test_synthetic_classes_are_separable():
    ds = make_synthetic_dataset(SyntheticSpec(classes=2, samples_per_class=100, seed=1))
    tr, te = class_stratified_split(ds, [50, 50])
    assert nearest_centroid_accuracy(tr, te) > 0.9


def test_dataset_dir_round_trip(tmp_path):
    ds = make_synthetic_dataset(SyntheticSpec(classes=2, samples_per_class=3, seed=5))
    write_dataset_dir(tmp_path, ds.streams, ds.labels, 2, ds.width, ds.height, duration_us=100_000)
    assert (tmp_path / "dataset.ini").is_file()
    assert sorted(p.name for p in (tmp_path / "1").iterdir()) == ["00000.bin", "00001.bin", "00002.bin"]
    back = load_dataset_dir(tmp_path, n_steps=10)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.frames, ds.frames)
