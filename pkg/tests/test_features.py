import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypomimia.errors import FormatError, InputError
from hypomimia.features import (
    STAT_FIELDS,
    Diagnosis,
    IntensityRecord,
    assemble_sequence,
    group,
    group_stats,
    process_record,
    read_records,
    write_records,
)
from oracles import group_stats_bruteforce

positive = st.floats(min_value=1e-3, max_value=50.0, allow_nan=False, allow_infinity=False)
records = st.lists(positive, min_size=16, max_size=16).map(lambda v: IntensityRecord(v, "s"))

COUNTING = IntensityRecord(np.arange(1, 17, dtype=float), "count")


def test_group_index_arithmetic():
    groups = group(COUNTING)
    np.testing.assert_array_equal(groups[1], [5, 6, 7, 8])
    np.testing.assert_array_equal(groups[0], COUNTING.values[:4])
    np.testing.assert_array_equal(groups.reshape(-1), COUNTING.values)


def test_group_stats_hand_example():
    s = group_stats([2.0, 1.0, 1.0, 0.0], 1)
    assert s.hv == 2.0
    assert s.mean == 1.0
    assert s.std == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert s.zscore == pytest.approx(math.sqrt(2.0), abs=1e-15)
    assert s.pd == 1.0
    assert (s.range, s.dmin, s.dmax) == (2.0, 2.0, 0.0)


def test_constant_group_guard():
    s = group_stats([0.7] * 4, 3)
    assert (s.hv, s.std, s.zscore, s.pd, s.range, s.dmin, s.dmax) == (0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert s.mean == pytest.approx(0.7, abs=1e-15)


def test_highlight_is_the_own_class_score():
    assert [s.hv for s in process_record(COUNTING)] == [1.0, 6.0, 11.0, 16.0]
    assert group_stats(group(COUNTING)[1], 2).hv == 6.0


def test_group_stats_rejects_bad_index():
    with pytest.raises(InputError):
        group_stats([1.0, 2.0, 3.0, 4.0], 5)


def test_diagonal_dominant_record_has_positive_pd():
    values = np.full(16, 0.1)
    values[[0, 5, 10, 15]] = 0.9
    assert all(s.pd > 0 for s in process_record(IntensityRecord(values)))


@settings(max_examples=200, deadline=None)
@given(records)
def test_agrees_with_bruteforce_oracle(record):
    for s in process_record(record):
        ref = group_stats_bruteforce(list(record.values), s.group_index)
        for name in STAT_FIELDS:
            assert abs(getattr(s, name) - ref[name]) <= 1e-12 * max(1.0, abs(ref[name]))


@settings(max_examples=200, deadline=None)
@given(records)
def test_sign_and_range_invariants(record):
    for s in process_record(record):
        assert s.std >= 0 and s.range >= 0
        assert 0 <= s.dmin <= s.range
        assert -s.range <= s.dmax <= 0
        assert math.isfinite(s.zscore)
        if s.std < 1e-12:
            assert s.zscore == 0.0


@settings(max_examples=100, deadline=None)
@given(records, st.floats(0.01, 100.0))
def test_homogeneity(record, alpha):
    base = process_record(record)
    scaled = process_record(record.scaled(alpha))
    for a, b in zip(base, scaled):
        assert b.zscore == pytest.approx(a.zscore, rel=1e-9, abs=1e-9)
        assert b.pd == pytest.approx(a.pd, rel=1e-9, abs=1e-9)
        for name in ("hv", "mean", "std", "range", "dmin", "dmax"):
            assert getattr(b, name) == pytest.approx(alpha * getattr(a, name), rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(records, st.integers(1, 4), st.permutations([0, 1, 2]))
def test_non_highlight_permutation_invariance(record, j, perm):
    values = record.values.copy()
    others = [k for k in range(4) if k != j - 1]
    block = values[4 * (j - 1): 4 * j].copy()
    block[others] = block[[others[p] for p in perm]]
    values[4 * (j - 1): 4 * j] = block
    a = process_record(record)[j - 1]
    b = process_record(IntensityRecord(values))[j - 1]
    for name in STAT_FIELDS:
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-12, abs=1e-12)


def test_record_invariants():
    with pytest.raises(InputError):
        IntensityRecord(np.ones(15))
    with pytest.raises(InputError):
        IntensityRecord(np.r_[np.ones(15), 0.0])
    with pytest.raises(InputError):
        IntensityRecord(np.r_[np.ones(15), np.inf])


def test_assemble_raw_and_processed():
    raw = assemble_sequence(COUNTING, "raw")
    proc = assemble_sequence(COUNTING, "processed")
    assert raw.timesteps.shape == (4, 4)
    assert proc.timesteps.shape == (4, 12)
    np.testing.assert_array_equal(raw.timesteps, group(COUNTING))
    np.testing.assert_array_equal(proc.timesteps[:, :4], raw.timesteps)
    np.testing.assert_array_equal(proc.timesteps[1, 4:], process_record(COUNTING)[1].as_array())


def test_assemble_constant_record():
    c = 0.42
    proc = assemble_sequence(IntensityRecord(np.full(16, c)), "processed").timesteps
    expected = [c, c, c, c, c, c, 0, 0, 0, 0, 0, 0]
    for row in proc:
        np.testing.assert_allclose(row, expected, rtol=0, atol=1e-15)


def test_assemble_rejects_unknown_mode():
    with pytest.raises(InputError):
        assemble_sequence(COUNTING, "fancy")


def test_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [IntensityRecord(rng.uniform(0.1, 3.0, 16), f"S{i}", Diagnosis(i % 2)) for i in range(5)]
    path = tmp_path / "r.jsonl"
    write_records(path, recs, with_stats=True)
    lines = path.read_text().splitlines()
    assert len(lines) == 5
    first = json.loads(lines[0])
    assert set(first) == {"subject_id", "diagnosis", "values", "stats"}
    assert np.array(first["stats"]).shape == (4, 8)
    back = read_records(path)
    for a, b in zip(recs, back):
        assert a.subject_id == b.subject_id and a.diagnosis == b.diagnosis
        np.testing.assert_array_equal(a.values, b.values)


def test_read_records_reports_offset(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps({"subject_id": "a", "diagnosis": "PD", "values": [1.0] * 16}) + "\n"
    path.write_text(good + "{not json}\n")
    with pytest.raises(FormatError) as info:
        read_records(path)
    assert info.value.offset == len(good.encode())
