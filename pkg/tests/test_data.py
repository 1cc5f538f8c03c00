import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fplplus.core import LabelMap, Volume3D
from fplplus.data import (
    DatasetIndex,
    IndexRecord,
    SyntheticSpec,
    TruncatedVolumeError,
    UnsupportedEncodingError,
    VolumeFormatError,
    crop_to_roi,
    generate_synthetic,
    label_bbox,
    pad_to,
    patch_corner,
    read_header,
    read_labels,
    read_volume,
    sample_patch,
    synth_case,
    trim_slices,
    uncrop,
    write_labels,
    write_volume,
    znorm,
)

# -- on-disk format ------------------------------------------------------------------


def test_volume_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    vol = Volume3D(rng.normal(size=(3, 4, 5)).astype(np.float32), spacing=(2.0, 0.5, 0.5))
    stem = write_volume(vol, tmp_path / "a")
    back = read_volume(stem)
    assert back.data.tobytes() == vol.data.tobytes() and back.spacing == vol.spacing
    header = json.loads((tmp_path / "a.json").read_text())
    assert set(header) == {"dims", "spacing", "dtype", "order", "endian"}
    # z-major little-endian payload
    raw = np.frombuffer((tmp_path / "a.raw").read_bytes(), "<f4")
    assert raw[1] == vol.data[0, 0, 1] and raw[5] == vol.data[0, 1, 0]


def test_labels_roundtrip(tmp_path):
    lab = LabelMap(np.arange(8).reshape(2, 2, 2) % 3, num_classes=3)
    write_labels(lab, tmp_path / "l")
    assert np.array_equal(read_labels(tmp_path / "l", 3).labels, lab.labels)
    with pytest.raises(ValueError):
        read_labels(tmp_path / "l", 2)


def test_truncated_payload_reports_offset(tmp_path):
    write_volume(Volume3D(np.zeros((2, 2, 2))), tmp_path / "v")
    (tmp_path / "v.raw").write_bytes(b"\0" * 12)
    with pytest.raises(TruncatedVolumeError) as err:
        read_volume(tmp_path / "v")
    assert err.value.offset == 12


@pytest.mark.parametrize(
    "patch, error",
    [
        ({"endian": "big"}, UnsupportedEncodingError),
        ({"order": "xyz"}, UnsupportedEncodingError),
        ({"dtype": "float16"}, UnsupportedEncodingError),
        ({"dims": [2, 2]}, VolumeFormatError),
        ({"extra": 1}, VolumeFormatError),
    ],
)
def test_header_validation(tmp_path, patch, error):
    write_volume(Volume3D(np.zeros((2, 2, 2))), tmp_path / "v")
    header = json.loads((tmp_path / "v.json").read_text())
    header.update(patch)
    (tmp_path / "v.json").write_text(json.dumps(header))
    with pytest.raises(error):
        read_header(tmp_path / "v")


def test_malformed_header_offset(tmp_path):
    (tmp_path / "v.json").write_text('{"dims": [1, 2,')
    with pytest.raises(VolumeFormatError) as err:
        read_header(tmp_path / "v")
    assert err.value.offset is not None


def test_index_validation(tmp_path):
    recs = [IndexRecord("a", "images/a", None, "source", "train")]
    with pytest.raises(ValueError, match="no label"):
        DatasetIndex(recs, tmp_path).validate()
    recs = [IndexRecord("b", "images/b", "labels/b", "target", "train")]
    with pytest.raises(ValueError, match="must not carry"):
        DatasetIndex(recs, tmp_path).validate()
    recs = [IndexRecord("c", "x", "y", "source", "train"), IndexRecord("c", "x", "y", "source", "train")]
    with pytest.raises(ValueError, match="duplicate"):
        DatasetIndex(recs, tmp_path).validate()


# -- preprocessing -------------------------------------------------------------------


def test_bbox_crop_uncrop():
    m = np.zeros((10, 10, 10), np.uint8)
    m[2:4, 5:6, 7:9] = 1
    box = label_bbox([m])
    assert box == ((2, 4), (5, 6), (7, 9))
    vol = Volume3D(np.arange(1000, dtype=np.float32).reshape(10, 10, 10))
    crop, off = crop_to_roi(vol, box, margin=2)
    assert off == (0, 3, 5) and crop.dims == (6, 5, 5)
    back = uncrop(crop.data, off, vol.dims)
    assert np.array_equal(back[0:6, 3:8, 5:10], vol.data[0:6, 3:8, 5:10])
    with pytest.raises(ValueError):
        label_bbox([np.zeros((3, 3, 3))])


def test_znorm_and_constant_volume():
    rng = np.random.default_rng(1)
    z = znorm(Volume3D(rng.normal(5, 3, (8, 8, 8))))
    assert abs(z.data.mean()) < 1e-5 and abs(z.data.std() - 1) < 1e-4
    assert np.all(znorm(Volume3D(np.full((4, 4, 4), 7.0))).data == 0)
    with pytest.raises(ValueError):
        znorm(Volume3D(np.full((2, 2, 2), np.nan)))


def test_trim_slices():
    v = Volume3D(np.zeros((6, 2, 2)))
    assert trim_slices(v, 1, 2).dims == (3, 2, 2)
    with pytest.raises(ValueError):
        trim_slices(v, 3, 3)


# -- sampling ------------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.tuples(*[st.integers(1, 20)] * 3), st.tuples(*[st.integers(1, 16)] * 3))
def test_pad_to_reaches_min_dims(dims, want):
    arr = np.ones(dims, np.float32)
    out, pads = pad_to(arr, want)
    assert all(o >= max(d, w) for o, d, w in zip(out.shape, dims, want))
    assert all(a + b == max(0, w - d) for (a, b), d, w in zip(pads, dims, want))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_forced_patch_contains_foreground(seed):
    rng = np.random.default_rng(seed)
    mask = np.zeros((20, 20, 20), bool)
    mask[tuple(rng.integers(0, 20, 3))] = True
    corner = patch_corner(mask.shape, (8, 8, 8), rng, mask, fg_prob=1.0)
    assert mask[tuple(slice(c, c + 8) for c in corner)].any()


def test_sample_patch_pads_small_volumes():
    rng = np.random.default_rng(0)
    vol = Volume3D(np.ones((8, 20, 20)))
    lab = LabelMap(np.zeros((8, 20, 20), np.uint8))
    p, lp = sample_patch(vol, lab, (16, 16, 16), rng)
    assert p.dims == (16, 16, 16) and lp.dims == (16, 16, 16)


# -- synthetic data ------------------------------------------------------------------


def test_synthetic_cases_are_deterministic_and_labeled():
    spec = SyntheticSpec(dims=(16, 16, 16), lesion_radius=(2.0, 3.0))
    a, la = synth_case(spec, "source", "train", 3)
    b, lb = synth_case(spec, "source", "train", 3)
    assert a.data.tobytes() == b.data.tobytes() and np.array_equal(la.labels, lb.labels)
    assert la.labels.any()
    c, _ = synth_case(spec, "target", "train", 3)
    assert not np.array_equal(a.data, c.data)


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(dims=(8, 32, 32)).validate()
    spec = SyntheticSpec(num_train=2)
    assert SyntheticSpec.from_json(spec.to_json()) == spec


def test_generate_synthetic_hides_target_train_labels(tmp_path):
    spec = SyntheticSpec(num_train=2, num_test=1, dims=(16, 16, 16), lesion_radius=(2.0, 3.0))
    index = generate_synthetic(spec, tmp_path)
    assert all(r.label is None for r in index.select("target", "train"))
    assert all(r.label is not None for r in index.select("source", "train"))
    assert all(r.label is not None for r in index.select("target", "test"))
    oracle = json.loads((tmp_path / "oracle.json").read_text())
    assert set(oracle) == {r.case_id for r in index.select("target", "train")}
    reloaded = DatasetIndex.load(tmp_path / "index.json")
    assert [r.case_id for r in reloaded.records] == [r.case_id for r in index.records]
