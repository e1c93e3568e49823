"""MSR1 tile files and newline-delimited JSON manifests.

MSR1 layout (all integers little-endian)::

    0-3    magic  b"MSR1"
    4-7    width  u32
    8-11   height u32
    12-15  bands  u32
    16     dtype  u8   (1 = float32)
    17     layout u8   (1 = band-sequential)
    18-    payload, band-sequential, row-major within a band, float32 LE

Validity grids are single-band MSR1 files holding 0.0 / 1.0.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import os
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ManifestError, TileFormatError
from .raster import AnnualMask, Scene

MAGIC = b"MSR1"
HEADER = struct.Struct("<4sIIIBB")
HEADER_SIZE = HEADER.size  # 18
DTYPE_FLOAT32 = 1
LAYOUT_BSQ = 1
MAX_PAYLOAD_BYTES = 1 << 40


@dataclass(frozen=True)
class TileFileHeader:
    width: int
    height: int
    bands: int
    dtype: int = DTYPE_FLOAT32
    layout: int = LAYOUT_BSQ

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.width, self.height, self.bands, self.dtype, self.layout)

    @property
    def payload_bytes(self) -> int:
        return self.width * self.height * self.bands * 4

    @classmethod
    def unpack(cls, raw: bytes) -> "TileFileHeader":
        if len(raw) < HEADER_SIZE:
            raise TileFormatError(f"truncated header ({len(raw)} of {HEADER_SIZE} bytes)")
        magic, width, height, bands, dtype, layout = HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise TileFormatError(f"bad magic {magic!r}")
        if dtype != DTYPE_FLOAT32:
            raise TileFormatError(f"unknown dtype code {dtype}")
        if layout != LAYOUT_BSQ:
            raise TileFormatError(f"unknown layout code {layout}")
        hdr = cls(width, height, bands, dtype, layout)
        if width == 0 or height == 0 or bands == 0:
            raise TileFormatError("degenerate dimensions")
        if hdr.payload_bytes > MAX_PAYLOAD_BYTES:
            raise TileFormatError(f"dimension overflow ({width}x{height}x{bands})")
        return hdr


def read_raster(path) -> np.ndarray:
    """Read an MSR1 file into a float32 ``(height, width, bands)`` array."""
    raw = Path(path).read_bytes()
    hdr = TileFileHeader.unpack(raw)
    payload = memoryview(raw)[HEADER_SIZE:]
    if len(payload) < hdr.payload_bytes:
        raise TileFormatError(
            f"{path}: truncated payload ({len(payload)} of {hdr.payload_bytes} bytes)"
        )
    if len(payload) > hdr.payload_bytes:
        raise TileFormatError(f"{path}: {len(payload) - hdr.payload_bytes} trailing bytes")
    bsq = np.frombuffer(payload, dtype="<f4").reshape(hdr.bands, hdr.height, hdr.width)
    return np.ascontiguousarray(bsq.transpose(1, 2, 0)).astype(np.float32, copy=False)


def write_raster(array: np.ndarray, path) -> None:
    """Write a ``(height, width[, bands])`` array as MSR1 float32."""
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or 0 in a.shape:
        raise TileFormatError(f"cannot write empty or malformed raster of shape {a.shape}")
    h, w, b = a.shape
    hdr = TileFileHeader(width=w, height=h, bands=b)
    body = np.ascontiguousarray(a.transpose(2, 0, 1), dtype="<f4").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(hdr.pack())
        fh.write(body)
    os.replace(tmp, path)


def read_scene(image_path, validity_path=None, *, region_id: str = "", sensing_date=None) -> Scene:
    pixels = read_raster(image_path)
    valid = None
    if validity_path is not None:
        vgrid = read_raster(validity_path)
        if vgrid.shape[2] != 1:
            raise TileFormatError(f"{validity_path}: validity grid must be single-band")
        if vgrid.shape[:2] != pixels.shape[:2]:
            raise TileFormatError(f"{validity_path}: validity grid size does not match image")
        valid = vgrid[:, :, 0] > 0.5
    return Scene(region_id, sensing_date, pixels, valid)


def write_scene(scene: Scene, path, validity_path=None) -> None:
    """Write ``scene.pixels`` (and optionally its validity grid).

    Pixels at invalid locations may hold anything, including NaN.
    """
    px = np.asarray(scene.pixels)
    if px.size == 0:
        raise TileFormatError("empty scene")
    finite = np.isfinite(px).all(axis=2)
    if np.any(scene.valid & ~finite):
        raise TileFormatError("non-finite reflectance at a valid pixel")
    write_raster(px, path)
    if validity_path is not None:
        write_raster(scene.valid.astype(np.float32), validity_path)


def read_mask(path, region_id: str = "") -> AnnualMask:
    grid = read_raster(path)
    if grid.shape[2] != 1:
        raise TileFormatError(f"{path}: mask must be single-band")
    return AnnualMask(region_id, grid[:, :, 0] > 0.5)


def write_mask(mask: AnnualMask, path) -> None:
    write_raster(mask.grid.astype(np.float32), path)


# -- manifests ---------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    region_id: str
    country_iso3: str
    sensing_date: dt.date
    image_path: str
    mask_path: str
    validity_path: str | None = None
    cloud_fraction: float | None = None
    coverage: float | None = None

    def __post_init__(self):
        if isinstance(self.sensing_date, str):
            try:
                object.__setattr__(self, "sensing_date", dt.date.fromisoformat(self.sensing_date))
            except ValueError as exc:
                raise ManifestError(f"unparseable sensing_date {self.sensing_date!r}") from exc
        if not isinstance(self.sensing_date, dt.date):
            raise ManifestError(f"sensing_date must be a date, got {self.sensing_date!r}")
        if not self.region_id:
            raise ManifestError("region_id is empty")
        if not self.image_path or not self.mask_path:
            raise ManifestError(f"{self.region_id}: image_path and mask_path must be non-empty")
        if self.validity_path == "":
            object.__setattr__(self, "validity_path", None)
        for name in ("cloud_fraction", "coverage"):
            v = getattr(self, name)
            if v is None:
                continue
            v = float(v)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ManifestError(f"{self.region_id}: {name}={v} outside [0, 1]")
            object.__setattr__(self, name, v)

    @property
    def key(self) -> tuple[str, dt.date]:
        return (self.region_id, self.sensing_date)

    def to_json(self) -> dict:
        d = asdict(self)
        d["sensing_date"] = self.sensing_date.isoformat()
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestRecord":
        known = {k: obj.get(k) for k in cls.__dataclass_fields__ if k in obj}
        try:
            return cls(**known)
        except TypeError as exc:
            raise ManifestError(str(exc)) from exc


def is_metadata(obj: dict) -> bool:
    """Header/trailer objects (provenance, failures) use underscore-prefixed keys only."""
    return bool(obj) and all(k.startswith("_") for k in obj)


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` for every data line, skipping metadata lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            if is_metadata(obj):
                continue
            yield lineno, obj


def read_metadata(path) -> dict:
    """Merge all metadata lines of a JSONL file into one dict."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                if isinstance(obj, dict) and is_metadata(obj):
                    meta.update(obj)
    return meta


def read_manifest(path) -> list[ManifestRecord]:
    records: list[ManifestRecord] = []
    seen: dict[tuple, int] = {}
    for lineno, obj in iter_jsonl(path):
        try:
            rec = ManifestRecord.from_json(obj)
        except ManifestError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        if rec.key in seen:
            raise ManifestError(
                f"{path}:{lineno}: duplicate record for region {rec.region_id!r} "
                f"on {rec.sensing_date.isoformat()} (first at line {seen[rec.key]})"
            )
        seen[rec.key] = lineno
        records.append(rec)
    return records


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def write_jsonl(path, rows: Iterable[dict], header: dict | None = None, trailer: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(dumps(header) + "\n")
        for row in rows:
            fh.write(dumps(row) + "\n")
        if trailer is not None:
            fh.write(dumps(trailer) + "\n")
    os.replace(tmp, path)


def write_manifest(path, records: Iterable[ManifestRecord], header: dict | None = None) -> None:
    write_jsonl(path, (r.to_json() for r in records), header=header)


def resolve(path: str | None, root) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    return p if p.is_absolute() or root is None else Path(root) / p


def load_record_scene(record: ManifestRecord, root=None) -> Scene:
    """Load the image (and validity grid, if any) a manifest record points to."""
    return read_scene(
        resolve(record.image_path, root),
        resolve(record.validity_path, root),
        region_id=record.region_id,
        sensing_date=record.sensing_date,
    )
