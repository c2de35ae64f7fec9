import gzip
import json
import math
import struct

import numpy as np
import pytest

from cascade_roi.errors import (
    DimensionUnsupported,
    IoFailure,
    MalformedHeader,
    OutOfRange,
    ParseFailure,
    UnknownKey,
    UnsupportedDatatype,
)
from cascade_roi.io import ALL, CaseReport, PipelineConfig, load_config, read_report, write_report
from cascade_roi.io.config import dump_config, parse_config
from cascade_roi.io.nifti import DT_INT16, DT_UINT8, encode_nifti, read_header, read_nifti, write_nifti
from cascade_roi.volume import GridMeta, Mask, Volume


# NIfTI ----------------------------------------------------------------------


def test_zero_mask_bytes(tmp_path):
    m = Mask(GridMeta((2, 2, 2)), np.zeros((2, 2, 2)))
    raw = encode_nifti(m)
    assert len(raw) == 352 + 8
    assert raw[352:] == b"\x00" * 8
    assert struct.unpack("<i", raw[:4])[0] == 348
    assert raw[344:348] == b"n+1\x00"
    assert struct.unpack("<f", raw[108:112])[0] == 352.0
    assert struct.unpack("<h", raw[70:72])[0] == DT_UINT8

    path = tmp_path / "zeros.nii.gz"
    write_nifti(m, path)
    assert gzip.decompress(path.read_bytes()) == raw


def test_volume_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    meta = GridMeta((5, 6, 7), (0.5, 0.75, 2.0), (-10.5, 3.25, 100.0))
    v = Volume(meta, rng.standard_normal((5, 6, 7)))
    for name in ("v.nii", "v.nii.gz"):
        write_nifti(v, tmp_path / name)
        back = read_nifti(tmp_path / name)
        assert isinstance(back, Volume)
        assert back.meta == meta
        assert back.data.tobytes() == v.data.tobytes()


def test_mask_read_back_as_mask(tmp_path):
    m = Mask(GridMeta((3, 3, 3)), np.eye(3)[:, :, None].repeat(3, axis=2))
    write_nifti(m, tmp_path / "m.nii")
    back = read_nifti(tmp_path / "m.nii")
    assert isinstance(back, Mask) and back == m


def _patch(raw: bytes, offset: int, fmt: str, value) -> bytes:
    return raw[:offset] + struct.pack(fmt, value) + raw[offset + struct.calcsize(fmt):]


def test_sizeof_hdr_wrong(tmp_path):
    raw = encode_nifti(Mask(GridMeta((2, 2, 2)), np.zeros((2, 2, 2))))
    (tmp_path / "bad.nii").write_bytes(_patch(raw, 0, "<i", 200))
    with pytest.raises(MalformedHeader):
        read_nifti(tmp_path / "bad.nii")


def test_bad_magic(tmp_path):
    raw = encode_nifti(Mask(GridMeta((2, 2, 2)), np.zeros((2, 2, 2))))
    (tmp_path / "bad.nii").write_bytes(raw[:344] + b"ni1\x00" + raw[348:])
    with pytest.raises(MalformedHeader):
        read_nifti(tmp_path / "bad.nii")


def test_int16_rescale(tmp_path):
    v = Volume(GridMeta((1, 1, 1)), np.array([3.0]).reshape(1, 1, 1))
    raw = encode_nifti(v, DT_INT16)
    raw = _patch(raw, 112, "<f", 2.0)
    raw = _patch(raw, 116, "<f", 1.0)
    (tmp_path / "s.nii").write_bytes(raw)
    assert read_nifti(tmp_path / "s.nii").data[0, 0, 0] == 7.0


def test_int16_identity_slope_not_applied(tmp_path):
    v = Volume(GridMeta((1, 1, 1)), np.array([3.0]).reshape(1, 1, 1))
    raw = _patch(_patch(encode_nifti(v, DT_INT16), 112, "<f", 1.0), 116, "<f", 5.0)
    (tmp_path / "s.nii").write_bytes(raw)
    assert read_nifti(tmp_path / "s.nii").data[0, 0, 0] == 3.0


def test_unsupported_datatype(tmp_path):
    raw = _patch(encode_nifti(Volume(GridMeta((2, 2, 2)), np.zeros((2, 2, 2)))), 70, "<h", 64)
    (tmp_path / "d.nii").write_bytes(raw)
    with pytest.raises(UnsupportedDatatype):
        read_nifti(tmp_path / "d.nii")


def test_4d_handling(tmp_path):
    v = Volume(GridMeta((2, 2, 2)), np.arange(8).reshape(2, 2, 2))
    raw = encode_nifti(v)
    single = _patch(_patch(raw, 40, "<h", 4), 48, "<h", 1)
    (tmp_path / "one.nii").write_bytes(single)
    assert read_nifti(tmp_path / "one.nii") == v
    multi = _patch(_patch(raw, 40, "<h", 4), 48, "<h", 2)
    (tmp_path / "two.nii").write_bytes(multi)
    with pytest.raises(DimensionUnsupported):
        read_nifti(tmp_path / "two.nii")


def test_big_endian_file(tmp_path):
    v = Volume(GridMeta((2, 3, 4), (1.5, 1.5, 3.0)), np.arange(24).reshape(2, 3, 4))
    nib = pytest.importorskip("nibabel")
    img = nib.Nifti1Image(v.data.astype(">f4"), np.diag([1.5, 1.5, 3.0, 1.0]))
    img.header.set_data_dtype(">f4")
    path = tmp_path / "be.nii"
    img.to_filename(path)
    back = read_nifti(path)
    assert back.meta.dims == (2, 3, 4) and back.meta.spacing == (1.5, 1.5, 3.0)
    assert np.array_equal(back.data, v.data)


def test_nibabel_reads_our_files(tmp_path):
    nib = pytest.importorskip("nibabel")
    meta = GridMeta((4, 5, 6), (0.5, 1.0, 2.5), (1.0, 2.0, 3.0))
    v = Volume(meta, np.random.default_rng(0).random((4, 5, 6)))
    path = tmp_path / "x.nii.gz"
    write_nifti(v, path)
    img = nib.load(path)
    assert img.shape == (4, 5, 6)
    assert np.allclose(img.header.get_zooms(), (0.5, 1.0, 2.5))
    assert np.array_equal(np.asarray(img.dataobj), v.data)
    assert np.allclose(img.affine[:3, 3], (1.0, 2.0, 3.0))
    assert read_header(path)["vox_offset"] == 352.0


def test_unwritable_path(tmp_path):
    m = Mask(GridMeta((2, 2, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(IoFailure):
        write_nifti(m, tmp_path / "missing" / "dir" / "m.nii")


def test_missing_file():
    with pytest.raises(IoFailure):
        read_nifti("/nonexistent/file.nii")


# config ----------------------------------------------------------------------


def test_empty_config_defaults(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == PipelineConfig()
    assert cfg.lung_overlap_min == 0.80
    assert cfg.surface_distance_max == 5
    assert cfg.min_component_voxels == 50
    assert cfg.connectivity == 26 and cfg.top_k == 1 and cfg.roi_margin == 0


def test_top_k_all():
    assert parse_config("top_k = ALL").top_k == ALL
    assert parse_config("top_k = 2 # two largest").top_k == 2


@pytest.mark.parametrize(
    "text, err",
    [
        ("lung_overlap_min = 1.5", OutOfRange),
        ("connectivity = 8", OutOfRange),
        ("threshold_prob = 1.0", OutOfRange),
        ("dilation_radius = 0", OutOfRange),
        ("alpha_scale = 0", OutOfRange),
        ("min_component_voxels = 1.5", OutOfRange),
        ("lung_overlap_min = 0.95", OutOfRange),  # above the mediastinal threshold
        ("bogus = 3", UnknownKey),
        ("this line has no equals sign", ParseFailure),
        ("threshold_prob = high", ParseFailure),
        ("top_k =", ParseFailure),
    ],
)
def test_config_errors(text, err):
    with pytest.raises(err):
        parse_config(text)


def test_config_idempotent():
    cfg = parse_config("top_k = ALL\nroi_margin = 16\nlung_overlap_min = 0.7\nthreshold_prob=0.35")
    once = dump_config(cfg)
    assert parse_config(once) == cfg
    assert dump_config(parse_config(once)) == once


def test_config_replace_unknown_key():
    with pytest.raises(UnknownKey):
        PipelineConfig().replace(nope=1)


# reports ---------------------------------------------------------------------


def _case(case_id="c1", hd=3.5):
    return CaseReport(case_id, 0.8, hd, 0.7, 4, 1, ((3, "Kept", "PassedOverlap"), (5, "Discarded", "LowOverlap")))


def test_empty_json_report(tmp_path):
    write_report([], tmp_path / "r.json", "json")
    assert json.loads((tmp_path / "r.json").read_text()) == []


def test_csv_one_row(tmp_path):
    write_report([_case()], tmp_path / "r.csv", "csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].split(",") == [
        "case_id", "dice", "hd95_mm", "boundary_dice", "components_before", "components_after", "decisions"
    ]
    assert lines[1].split(",")[-1] == "2"


def test_json_round_trip(tmp_path):
    reports = [_case("a"), _case("b", math.inf)]
    write_report(reports, tmp_path / "r.json")
    raw = json.loads((tmp_path / "r.json").read_text())
    assert set(raw[0]) == {
        "case_id", "dice", "hd95_mm", "boundary_dice", "components_before", "components_after", "decisions"
    }
    assert raw[1]["hd95_mm"] is None
    assert read_report(tmp_path / "r.json") == reports


def test_report_component_invariant():
    with pytest.raises(ValueError):
        CaseReport("x", 1.0, 0.0, 1.0, 1, 2)
