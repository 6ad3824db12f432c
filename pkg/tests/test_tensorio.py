import struct

import numpy as np
import pytest

from reidkit import (
    DataError,
    FormatError,
    IoError,
    MetaTable,
    SampleMeta,
    load_distances,
    load_features,
    load_meta,
    save_distances,
    save_features,
    save_meta,
)


def test_feature_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    for n, d in [(1, 1), (3, 7), (64, 16), (5, 128)]:
        m = rng.normal(size=(n, d)).astype(np.float32)
        path = tmp_path / f"f_{n}x{d}.fvec"
        save_features(m, path)
        back = load_features(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, m)


def test_distance_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(12)
    m = np.abs(rng.normal(size=(9, 17))).astype(np.float32)
    path = tmp_path / "d.dmat"
    save_distances(m, path)
    assert np.array_equal(load_distances(path), m)


def test_fvec_header_layout(tmp_path):
    m = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "f.fvec"
    save_features(m, path)
    blob = path.read_bytes()
    magic, n, d = struct.unpack_from("<4sII", blob)
    assert magic == b"RDF1"
    assert (n, d) == (2, 3)
    assert len(blob) == 12 + 2 * 3 * 4
    assert np.frombuffer(blob[12:], dtype="<f4").tolist() == m.reshape(-1).tolist()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "x.fvec"
    path.write_bytes(b"NOPE" + struct.pack("<II", 1, 1) + b"\x00" * 4)
    with pytest.raises(FormatError):
        load_features(path)


def test_wrong_magic_kind_rejected(tmp_path):
    path = tmp_path / "cross.fvec"
    save_features(np.ones((2, 2), dtype=np.float32), path)
    with pytest.raises(FormatError):
        load_distances(path)  # .fvec magic fed to the .dmat loader


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.fvec"
    save_features(np.ones((4, 4), dtype=np.float32), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(FormatError):
        load_features(path)


def test_truncated_header_rejected(tmp_path):
    path = tmp_path / "h.fvec"
    path.write_bytes(b"RDF1\x01")
    with pytest.raises(FormatError):
        load_features(path)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        load_features(tmp_path / "missing.fvec")


def test_non_finite_payload_rejected(tmp_path):
    m = np.ones((2, 2), dtype=np.float32)
    with pytest.raises(DataError):
        save_features(m * np.nan, tmp_path / "nan.fvec")
    # sneak a NaN past the writer by patching bytes directly
    path = tmp_path / "inf.fvec"
    save_features(m, path)
    blob = bytearray(path.read_bytes())
    blob[12:16] = struct.pack("<f", np.inf)
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError):
        load_features(path)


def test_negative_distances_rejected(tmp_path):
    with pytest.raises(DataError):
        save_distances(np.array([[0.5, -0.1]], dtype=np.float32), tmp_path / "n.dmat")
    path = tmp_path / "n2.dmat"
    save_distances(np.array([[0.5, 0.1]], dtype=np.float32), path)
    blob = bytearray(path.read_bytes())
    blob[12:16] = struct.pack("<f", -1.0)
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError):
        load_distances(path)


def test_empty_shapes_rejected(tmp_path):
    with pytest.raises(DataError):
        save_features(np.zeros((0, 4), dtype=np.float32), tmp_path / "e.fvec")
    path = tmp_path / "e2.fvec"
    path.write_bytes(struct.pack("<4sII", b"RDF1", 0, 4))
    with pytest.raises(DataError):
        load_features(path)


def test_meta_roundtrip(tmp_path):
    meta = MetaTable([
        SampleMeta("a", 3, 0),
        SampleMeta("b", 3, 1),
        SampleMeta("c", 7, 0),
    ])
    path = tmp_path / "m.csv"
    save_meta(meta, path)
    back = load_meta(path)
    assert back == meta
    assert back.image_ids == ["a", "b", "c"]
    assert back.person_ids.tolist() == [3, 3, 7]
    assert back.camera_ids.tolist() == [0, 1, 0]


def test_meta_header_is_exact(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("image,person,camera\na,1,0\n")
    with pytest.raises(FormatError):
        load_meta(path)
    path.write_text("image_id,person_id,camera_id,extra\na,1,0,9\n")
    with pytest.raises(FormatError):
        load_meta(path)


def test_meta_field_validation(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("image_id,person_id,camera_id\na,one,0\n")
    with pytest.raises(FormatError):
        load_meta(path)
    path.write_text("image_id,person_id,camera_id\na,1,0\na,2,0\n")
    with pytest.raises(DataError):
        load_meta(path)
    path.write_text("image_id,person_id,camera_id\na,-1,0\n")
    with pytest.raises(DataError):
        load_meta(path)
    with pytest.raises(DataError):
        MetaTable([SampleMeta("", 1, 0)])


def test_meta_subset_preserves_order():
    meta = MetaTable([SampleMeta(f"img{i}", i % 2, 0) for i in range(6)])
    sub = meta.subset([4, 1, 5])
    assert sub.image_ids == ["img4", "img1", "img5"]
    assert sub.person_ids.tolist() == [0, 1, 1]
