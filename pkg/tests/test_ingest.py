import json
import struct

import numpy as np
import pytest

from mango_curate.errors import ManifestError, TileFormatError
from mango_curate.ingest import (
    HEADER_SIZE,
    ManifestRecord,
    read_manifest,
    read_mask,
    read_raster,
    read_scene,
    write_manifest,
    write_mask,
    write_raster,
    write_scene,
)

from helpers import make_mask, make_scene


def _header(w, h, b, magic=b"MSR1", dtype=1, layout=1):
    return magic + struct.pack("<IIIBB", w, h, b, dtype, layout)


def test_header_is_18_bytes():
    assert HEADER_SIZE == 18


def test_read_2x2x1(tmp_path):
    p = tmp_path / "t.msr"
    p.write_bytes(_header(2, 2, 1) + struct.pack("<4f", 1, 2, 3, 4))
    scene = read_scene(p)
    assert scene.pixels[0, 0, 0] == 1
    assert scene.pixels[0, 1, 0] == 2
    assert scene.pixels[1, 0, 0] == 3
    assert scene.pixels[1, 1, 0] == 4
    assert scene.valid.all()


def test_band_sequential_layout(tmp_path):
    p = tmp_path / "t.msr"
    # 1x2 tile, 2 bands: band0 = [1, 2], band1 = [10, 20]
    p.write_bytes(_header(2, 1, 2) + struct.pack("<4f", 1, 2, 10, 20))
    px = read_raster(p)
    assert px.shape == (1, 2, 2)
    assert px[0, 0].tolist() == [1, 10]
    assert px[0, 1].tolist() == [2, 20]


def test_written_bytes_match_format(tmp_path):
    p = tmp_path / "t.msr"
    px = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    write_raster(px, p)
    raw = p.read_bytes()
    assert raw[:HEADER_SIZE] == _header(3, 2, 2)
    assert raw[HEADER_SIZE:] == px.transpose(2, 0, 1).astype("<f4").tobytes()


@pytest.mark.parametrize(
    "blob,msg",
    [
        (_header(0, 2, 1), "degenerate dimensions"),
        (_header(2, 2, 1, magic=b"XXXX") + bytes(16), "bad magic"),
        (_header(2, 2, 1, dtype=7) + bytes(16), "dtype"),
        (_header(2, 2, 1, layout=3) + bytes(16), "layout"),
        (_header(2, 2, 1) + bytes(15), "truncated payload"),
        (_header(2, 2, 1) + bytes(17), "trailing"),
        (_header(2**20, 2**20, 2**10), "overflow"),
        (b"MSR1", "truncated header"),
    ],
)
def test_read_errors(tmp_path, blob, msg):
    p = tmp_path / "bad.msr"
    p.write_bytes(blob)
    with pytest.raises(TileFormatError, match=msg):
        read_scene(p)


def test_roundtrip_random_8x8x3(tmp_path, rng):
    for i in range(10):
        px = rng.standard_normal((8, 8, 3)).astype(np.float32)
        scene = make_scene(px)
        write_scene(scene, tmp_path / f"{i}.msr")
        back = read_scene(tmp_path / f"{i}.msr")
        assert back.pixels.dtype == np.float32
        assert back.pixels.tobytes() == px.tobytes()


def test_roundtrip_with_validity(tmp_path, rng):
    px = rng.random((5, 7, 2)).astype(np.float32)
    valid = rng.random((5, 7)) > 0.3
    px[~valid] = np.nan
    write_scene(make_scene(px, valid), tmp_path / "i.msr", tmp_path / "v.msr")
    back = read_scene(tmp_path / "i.msr", tmp_path / "v.msr")
    assert np.array_equal(back.valid, valid)
    assert back.pixels.tobytes() == px.tobytes()


def test_write_rejects_nonfinite_valid_pixel(tmp_path):
    px = np.ones((2, 2, 1))
    px[0, 0, 0] = np.inf
    with pytest.raises(TileFormatError, match="non-finite reflectance"):
        write_scene(make_scene(px), tmp_path / "x.msr")


def test_write_rejects_empty(tmp_path):
    with pytest.raises(TileFormatError):
        write_raster(np.zeros((0, 3, 1)), tmp_path / "x.msr")


def test_mask_roundtrip(tmp_path, rng):
    grid = rng.random((9, 4)) > 0.5
    write_mask(make_mask(grid), tmp_path / "m.msr")
    assert np.array_equal(read_mask(tmp_path / "m.msr").grid, grid)


def _rec(region="R1", date="2020-01-01", **kw):
    base = dict(region_id=region, country_iso3="IDN", sensing_date=date,
                image_path="a.msr", mask_path="m.msr", cloud_fraction=0.01, coverage=1.0)
    base.update(kw)
    return base


def _write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))


def test_manifest_empty(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert read_manifest(p) == []


def test_manifest_two_dates(tmp_path):
    p = tmp_path / "m.jsonl"
    _write_lines(p, [_rec(date="2020-01-01"), _rec(date="2020-02-01")])
    recs = read_manifest(p)
    assert [r.sensing_date.isoformat() for r in recs] == ["2020-01-01", "2020-02-01"]


def test_manifest_duplicate_named_at_second_line(tmp_path):
    p = tmp_path / "m.jsonl"
    _write_lines(p, [_rec(), _rec("R2"), _rec()])
    with pytest.raises(ManifestError, match=r":3: duplicate record for region 'R1' on 2020-01-01"):
        read_manifest(p)


def test_manifest_malformed_line_number(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps(_rec()) + "\n{not json\n")
    with pytest.raises(ManifestError, match=":2:"):
        read_manifest(p)


@pytest.mark.parametrize("bad", [{"cloud_fraction": 1.5}, {"coverage": -0.1}, {"sensing_date": "2020-13-01"}, {"image_path": ""}])
def test_manifest_invalid_fields(tmp_path, bad):
    p = tmp_path / "m.jsonl"
    _write_lines(p, [_rec(**bad)])
    with pytest.raises(ManifestError, match=":1:"):
        read_manifest(p)


def test_manifest_skips_metadata_lines(tmp_path):
    p = tmp_path / "m.jsonl"
    _write_lines(p, [{"_provenance": {"tool": "x"}}, _rec()])
    assert len(read_manifest(p)) == 1


def test_manifest_serialize_idempotent(tmp_path):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    _write_lines(p1, [_rec(date="2020-03-01"), _rec("R9", validity_path="v.msr", cloud_fraction=None)])
    first = read_manifest(p1)
    write_manifest(p2, first)
    second = read_manifest(p2)
    assert first == second
    write_manifest(p1, second)
    assert p1.read_bytes() == p2.read_bytes()


def test_record_roundtrip_json():
    rec = ManifestRecord.from_json(_rec())
    assert ManifestRecord.from_json(rec.to_json()) == rec
