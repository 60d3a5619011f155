import json
import struct
from dataclasses import replace

import numpy as np
import pytest

from hypomimia.data_io import (
    EXPRESSION_MANIFEST,
    SUBJECT_MANIFEST,
    ClipEntry,
    SubjectEntry,
    SyntheticConfig,
    decode_frames,
    encode_frames,
    load_expression_dataset,
    load_subject_videos,
    read_clip_manifest,
    read_frames,
    read_subject_manifest,
    synth_expression_clips,
    synth_intensity_records,
    synth_subject_clips,
    write_expression_dataset,
    write_frames,
    write_jsonl,
    write_subject_dataset,
)
from hypomimia.errors import FormatError, InputError
from hypomimia.expression_model import ExpressionLabel
from hypomimia.features import Diagnosis
from oracles import nearest_centroid_accuracy

SMALL = SyntheticConfig(videos_per_class=2, n_hc=3, n_pd=3, n_frames=6, image_size=8)


def test_frame_file_layout():
    frames = np.array([0.0, 0.25, 1.0, 0.5], dtype=np.float32).reshape(1, 2, 2, 1)
    buf, clamped = encode_frames(frames)
    assert clamped == 0
    assert buf[:4] == b"FTB1"
    assert struct.unpack_from("<4I", buf, 4) == (1, 2, 2, 1)
    assert struct.unpack_from("<4f", buf, 20) == (0.0, 0.25, 1.0, 0.5)
    assert len(buf) == 36


def test_frame_file_clamps_and_counts():
    buf, clamped = encode_frames(np.array([-0.5, 0.5, 2.0]).reshape(1, 1, 3, 1))
    assert clamped == 2
    assert decode_frames(buf).reshape(-1).tolist() == [0.0, 0.5, 1.0]


def test_frame_file_errors_carry_offsets():
    good, _ = encode_frames(np.zeros((2, 2, 2, 1)))
    with pytest.raises(FormatError) as info:
        decode_frames(b"XXXX" + good[4:])
    assert info.value.offset == 0
    with pytest.raises(FormatError) as info:
        decode_frames(good[:-3])
    assert info.value.offset == len(good) - 3
    with pytest.raises(FormatError) as info:
        decode_frames(good + b"\0")
    assert info.value.offset == len(good)
    with pytest.raises(FormatError):
        decode_frames(b"FTB1" + struct.pack("<4I", 1 << 16, 1 << 16, 1, 1))
    with pytest.raises(FormatError):
        decode_frames(good[:10])


def test_frame_file_round_trip_on_disk(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.uniform(size=(3, 5, 4, 2)).astype(np.float32)
    path = tmp_path / "x.ftb"
    assert write_frames(path, frames) == 0
    back = read_frames(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, frames)


def test_manifest_round_trip(tmp_path):
    clips = [ClipEntry("a.ftb", ExpressionLabel.ANGRY), ClipEntry("b.ftb", ExpressionLabel.NEUTRAL)]
    write_jsonl(tmp_path / "c.jsonl", clips)
    assert read_clip_manifest(tmp_path / "c.jsonl") == clips
    videos = {"neutral": "n", "happiness": "h", "surprised": "s", "angry": "a"}
    subjects = [SubjectEntry("S1", Diagnosis.PD, videos)]
    write_jsonl(tmp_path / "s.jsonl", subjects)
    back = read_subject_manifest(tmp_path / "s.jsonl")
    assert back == subjects
    assert back[0].ordered_paths() == ["n", "h", "s", "a"]


def test_manifest_errors(tmp_path):
    path = tmp_path / "s.jsonl"
    first = json.dumps({"path": "a", "label": "happiness"}) + "\n"
    path.write_text(first + json.dumps({"path": "b", "label": "sad"}) + "\n")
    with pytest.raises(FormatError) as info:
        read_clip_manifest(path)
    assert info.value.offset == len(first)
    path.write_text(json.dumps({"subject_id": "x", "diagnosis": "HC", "videos": {"neutral": "n"}}) + "\n")
    with pytest.raises(FormatError):
        read_subject_manifest(path)


def test_synthetic_config_validation():
    with pytest.raises(InputError):
        SyntheticConfig(period=0)


def test_generators_are_deterministic():
    a, b = synth_expression_clips(SMALL), synth_expression_clips(SMALL)
    assert all(np.array_equal(x[0], y[0]) and x[1] == y[1] for x, y in zip(a, b))
    other = synth_expression_clips(replace(SMALL, seed=1))
    assert not np.array_equal(a[0][0], other[0][0])


def test_clip_shapes_and_range():
    clips = synth_expression_clips(SMALL)
    assert len(clips) == 8
    assert [c[1] for c in clips[:4]] == list(ExpressionLabel)
    for clip, _ in clips:
        assert clip.shape == (6, 8, 8, 1)
        assert clip.min() >= 0.0 and clip.max() <= 1.0


def test_classes_are_separable_by_nearest_centroid():
    cfg = SyntheticConfig(videos_per_class=12, n_frames=20)
    clips = synth_expression_clips(cfg)
    x = [c.mean(axis=0) for c, _ in clips]
    y = [int(lbl) for _, lbl in clips]
    half = len(x) // 2
    assert nearest_centroid_accuracy(x[:half], y[:half], x[half:], y[half:]) == 1.0


def test_pd_clips_move_less():
    cfg = replace(SyntheticConfig(n_hc=10, n_pd=10, n_frames=40), noise_sigma=0.0)
    spreads = {Diagnosis.HC: [], Diagnosis.PD: []}
    for _, diagnosis, clips in synth_subject_clips(cfg):
        happy = clips[int(ExpressionLabel.HAPPINESS)].astype(np.float64)
        deviation = np.abs(happy - 0.5).mean(axis=(1, 2, 3))
        spreads[diagnosis].append((deviation.mean(), deviation.var()))
    hc, pd = np.array(spreads[Diagnosis.HC]), np.array(spreads[Diagnosis.PD])
    assert pd[:, 0].mean() < hc[:, 0].mean()
    assert pd[:, 1].mean() < hc[:, 1].mean()


def test_synthetic_intensity_records():
    recs = synth_intensity_records(SyntheticConfig(n_hc=30, n_pd=30))
    assert [r.subject_id for r in recs[:2]] == ["HC000", "HC001"]
    hc = np.mean([r.values[[0, 5, 10, 15]].mean() for r in recs if r.diagnosis == Diagnosis.HC])
    pd = np.mean([r.values[[0, 5, 10, 15]].mean() for r in recs if r.diagnosis == Diagnosis.PD])
    assert hc > pd


def test_dataset_writers_and_loaders(tmp_path):
    write_expression_dataset(tmp_path / "expr", SMALL)
    assert (tmp_path / "expr" / EXPRESSION_MANIFEST).exists()
    data = load_expression_dataset(tmp_path / "expr", 3)
    assert len(data) == 8 and data[0].frames.shape == (3, 8, 8, 1)
    assert data[1].source_label is ExpressionLabel.HAPPINESS

    entries = write_subject_dataset(tmp_path / "subj", SMALL)
    assert read_subject_manifest(tmp_path / "subj" / SUBJECT_MANIFEST) == entries
    videos = load_subject_videos(tmp_path / "subj", entries[0], 4)
    assert [v.source_label for v in videos] == list(ExpressionLabel)
    original = synth_subject_clips(SMALL)[0][2][0]
    assert np.array_equal(videos[0].frames, original[[0, 1, 3, 5]].astype(np.float64))


def test_static_noise_free_clip_is_constant():
    clip = synth_expression_clips(replace(SMALL, amp=0.0, noise_sigma=0.0))[0][0]
    assert all(np.array_equal(frame, clip[0]) for frame in clip)


def test_zero_sigma_hc_records_identical():
    recs = synth_intensity_records(SyntheticConfig(n_hc=4, n_pd=2, intensity_sigma_hc=0.0))
    hc = [r.values for r in recs if r.diagnosis == Diagnosis.HC]
    assert all(np.array_equal(v, hc[0]) for v in hc)
    assert all(np.all(r.values > 0) for r in recs)


def test_subject_counts_and_file_determinism(tmp_path):
    a = write_subject_dataset(tmp_path / "a", SMALL)
    b = write_subject_dataset(tmp_path / "b", SMALL)
    assert len(a) == SMALL.n_hc + SMALL.n_pd
    assert (tmp_path / "a" / SUBJECT_MANIFEST).read_bytes() == (tmp_path / "b" / SUBJECT_MANIFEST).read_bytes()
    for e in a:
        for rel in e.ordered_paths():
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
