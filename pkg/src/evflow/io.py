"""Event file formats, record files, and flow-image rendering.

Two event container formats:

* CSV, one ``t_us,x,y,polarity`` line per event, no header;
* packed binary: a 16-byte little-endian header (magic ``EVT1``,
  u16 width, u16 height, u64 record count) followed by 13-byte records
  of u64 t, u16 x, u16 y, u8 p.

Readers stream fixed-size chunks and validate timestamp monotonicity
and, when the geometry is known, coordinate bounds. Both validations
reject rather than reorder.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import EVENT_DTYPE, FLOW_DTYPE, SensorGeometry
from .errors import (
    EmptyWindowError,
    NonMonotonicTimestampError,
    OutOfBoundsError,
    ParseError,
)
from .predict import PREDICTED_DTYPE
from .synth import LABELED_DTYPE

MAGIC = b"EVT1"
HEADER = struct.Struct("<4sHHQ")
BIN_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

DEFAULT_CHUNK = 1 << 16


@dataclass
class EventStream:
    """Chunked event source; ``geometry`` is None for CSV files opened
    without an explicit sensor size."""

    geometry: SensorGeometry | None
    chunks: Iterator[np.ndarray]

    def __iter__(self):
        return iter(self.chunks)

    def read_all(self) -> np.ndarray:
        parts = list(self.chunks)
        if not parts:
            return np.empty(0, dtype=EVENT_DTYPE)
        return np.concatenate(parts)


def detect_format(path: str) -> str:
    p = str(path)
    if p.endswith(".csv"):
        return "csv"
    if p.endswith(".evt") or p.endswith(".bin"):
        return "binary"
    with open(p, "rb") as f:
        return "binary" if f.read(4) == MAGIC else "csv"


def _validate_chunk(chunk: np.ndarray, geometry: SensorGeometry | None,
                    prev_t: int | None, where: str):
    t = chunk["t"]
    if len(t) > 1 and (np.diff(t) < 0).any():
        i = int(np.argmax(np.diff(t) < 0))
        raise NonMonotonicTimestampError(f"{where}: timestamp decreases at record {i + 1}")
    if prev_t is not None and len(t) and int(t[0]) < prev_t:
        raise NonMonotonicTimestampError(f"{where}: timestamp decreases across chunks")
    if geometry is not None and len(chunk):
        if int(chunk["x"].max()) >= geometry.width or int(chunk["y"].max()) >= geometry.height:
            raise OutOfBoundsError(
                f"{where}: coordinates exceed {geometry.width}x{geometry.height}"
            )


def _csv_chunks(path: str, geometry: SensorGeometry | None, chunk_size: int):
    prev_t = None
    lineno = 0
    buf = np.empty(chunk_size, dtype=EVENT_DTYPE)
    n = 0
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            lineno += 1
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                t = int(parts[0])
                x = int(parts[1])
                y = int(parts[2])
                p = int(parts[3])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if p not in (0, 1):
                raise ParseError(f"{path}:{lineno}: polarity must be 0 or 1, got {p}")
            if x < 0 or y < 0:
                raise ParseError(f"{path}:{lineno}: negative coordinates")
            buf[n] = (t, x, y, p)
            n += 1
            if n == chunk_size:
                out = buf[:n].copy()
                _validate_chunk(out, geometry, prev_t, f"{path}:{lineno}")
                prev_t = int(out["t"][-1])
                yield out
                n = 0
    if n:
        out = buf[:n].copy()
        _validate_chunk(out, geometry, prev_t, f"{path}:{lineno}")
        yield out


def _binary_chunks(path: str, geometry: SensorGeometry, count: int, chunk_size: int):
    prev_t = None
    seen = 0
    with open(path, "rb") as f:
        f.seek(HEADER.size)
        while seen < count:
            take = min(chunk_size, count - seen)
            raw = np.fromfile(f, dtype=BIN_RECORD, count=take)
            if len(raw) < take:
                raise ParseError(f"{path}: truncated at record {seen + len(raw)} of {count}")
            if len(raw) and raw["t"].max() > np.iinfo(np.int64).max:
                raise ParseError(f"{path}: timestamp exceeds signed 64-bit range")
            out = np.empty(len(raw), dtype=EVENT_DTYPE)
            for name in ("t", "x", "y", "p"):
                out[name] = raw[name]
            _validate_chunk(out, geometry, prev_t, f"{path}@{seen}")
            prev_t = int(out["t"][-1]) if len(out) else prev_t
            seen += len(raw)
            yield out


def read_events(
    path: str,
    fmt: str | None = None,
    geometry: SensorGeometry | None = None,
    chunk_size: int = DEFAULT_CHUNK,
) -> EventStream:
    """Open an event file for chunked reading. For binary files the
    geometry comes from the header (a mismatching explicit geometry is
    an error)."""
    fmt = fmt or detect_format(path)
    if fmt == "csv":
        return EventStream(geometry, _csv_chunks(path, geometry, chunk_size))
    if fmt != "binary":
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "rb") as f:
        head = f.read(HEADER.size)
    if len(head) < HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, w, h, count = HEADER.unpack(head)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    file_geom = SensorGeometry(w, h)
    if geometry is not None and (geometry.width != w or geometry.height != h):
        raise OutOfBoundsError(
            f"{path}: header geometry {w}x{h} != requested "
            f"{geometry.width}x{geometry.height}"
        )
    return EventStream(file_geom, _binary_chunks(path, file_geom, count, chunk_size))


def read_events_array(path: str, fmt: str | None = None,
                      geometry: SensorGeometry | None = None) -> np.ndarray:
    return read_events(path, fmt, geometry).read_all()


def write_events_csv(path: str, chunks) -> int:
    n = 0
    with open(path, "w", encoding="ascii") as f:
        for chunk in _as_chunks(chunks):
            for t, x, y, p in zip(chunk["t"], chunk["x"], chunk["y"], chunk["p"]):
                f.write(f"{t},{x},{y},{p}\n")
            n += len(chunk)
    return n


def write_events_binary(path: str, chunks, geometry: SensorGeometry) -> int:
    n = 0
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, geometry.width, geometry.height, 0))
        for chunk in _as_chunks(chunks):
            raw = np.empty(len(chunk), dtype=BIN_RECORD)
            for name in ("t", "x", "y", "p"):
                raw[name] = chunk[name]
            raw.tofile(f)
            n += len(chunk)
        f.seek(0)
        f.write(HEADER.pack(MAGIC, geometry.width, geometry.height, n))
    return n


def write_events(path: str, chunks, geometry: SensorGeometry | None = None,
                 fmt: str | None = None) -> int:
    fmt = fmt or detect_format_for_write(path)
    if fmt == "csv":
        return write_events_csv(path, chunks)
    if fmt == "binary":
        if geometry is None:
            raise ValueError("binary event files need a geometry for the header")
        return write_events_binary(path, chunks, geometry)
    raise ValueError(f"unknown format {fmt!r}")


def detect_format_for_write(path: str) -> str:
    return "csv" if str(path).endswith(".csv") else "binary"


def _as_chunks(chunks):
    if isinstance(chunks, np.ndarray):
        yield chunks
    else:
        yield from chunks


# ---------------------------------------------------------------------------
# Ground-truth sidecar
# ---------------------------------------------------------------------------

def write_truth_csv(path: str, labeled: np.ndarray) -> None:
    """Sidecar rows: t,x,y,p,vx_true,vy_true,object_id."""
    with open(path, "w", encoding="ascii") as f:
        for r in labeled:
            f.write(
                f"{r['t']},{r['x']},{r['y']},{r['p']},"
                f"{float(r['vx'])!r},{float(r['vy'])!r},{r['object_id']}\n"
            )


def read_truth_csv(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise ParseError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            try:
                rows.append(
                    (
                        int(parts[0]),
                        int(parts[1]),
                        int(parts[2]),
                        int(parts[3]),
                        float(parts[4]),
                        float(parts[5]),
                        int(parts[6]),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=LABELED_DTYPE)


# ---------------------------------------------------------------------------
# Flow records
# ---------------------------------------------------------------------------

def write_flow_records(path: str, chunks) -> int:
    """Fixed record schema: t,x,y,p,vx,vy,valid,chosen_radius."""
    n = 0
    with open(path, "w", encoding="ascii") as f:
        for chunk in _as_chunks(chunks):
            for r in chunk:
                f.write(
                    f"{r['t']},{r['x']},{r['y']},{r['p']},"
                    f"{float(r['vx'])!r},{float(r['vy'])!r},"
                    f"{r['valid']},{r['chosen_radius']}\n"
                )
            n += len(chunk)
    return n


def read_flow_records(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise ParseError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                rows.append(
                    (
                        int(parts[0]),
                        int(parts[1]),
                        int(parts[2]),
                        int(parts[3]),
                        float(parts[4]),
                        float(parts[5]),
                        int(parts[6]),
                        int(parts[7]),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=FLOW_DTYPE)


# ---------------------------------------------------------------------------
# Predicted events: event format plus a horizon annotation column
# ---------------------------------------------------------------------------

def write_predicted_csv(path: str, chunks) -> int:
    n = 0
    with open(path, "w", encoding="ascii") as f:
        for chunk in _as_chunks(chunks):
            for r in chunk:
                f.write(
                    f"{r['t']},{float(r['px'])!r},{float(r['py'])!r},"
                    f"{r['p']},{r['horizon']}\n"
                )
            n += len(chunk)
    return n


def read_predicted_csv(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                rows.append(
                    (int(parts[0]), float(parts[1]), float(parts[2]),
                     int(parts[3]), int(parts[4]))
                )
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=PREDICTED_DTYPE)


# ---------------------------------------------------------------------------
# Flow image rendering
# ---------------------------------------------------------------------------

def flow_image(records: np.ndarray, t0: int, t1: int, geometry: SensorGeometry,
               speed_clip: float | None = None) -> np.ndarray:
    """RGB image of the most recent valid flow per pixel in [t0, t1):
    hue encodes direction, full saturation, brightness encodes clamped
    speed; pixels without flow stay black."""
    sel = records[(records["t"] >= t0) & (records["t"] < t1) & (records["valid"] == 1)]
    if len(sel) == 0:
        raise EmptyWindowError(f"no valid flow records in [{t0}, {t1})")
    h, w = geometry.height, geometry.width
    vx = np.zeros((h, w))
    vy = np.zeros((h, w))
    lit = np.zeros((h, w), dtype=bool)
    vx[sel["y"], sel["x"]] = sel["vx"]  # records are in stream order; last write wins
    vy[sel["y"], sel["x"]] = sel["vy"]
    lit[sel["y"], sel["x"]] = True
    speed = np.hypot(vx, vy)
    if speed_clip is None:
        speed_clip = float(speed.max()) or 1.0
    hue = np.mod(np.arctan2(vy, vx), 2.0 * np.pi) / (2.0 * np.pi)
    value = np.clip(speed / speed_clip, 0.0, 1.0)
    value[~lit] = 0.0
    return _hsv_to_rgb_u8(hue, value)


def _hsv_to_rgb_u8(hue: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Saturation-1 HSV to uint8 RGB."""
    h6 = hue * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = np.zeros_like(value)
    q = value * (1.0 - f)
    t = value * f
    r = np.choose(i, [value, q, p, p, t, value])
    g = np.choose(i, [t, value, value, q, p, p])
    b = np.choose(i, [p, p, t, value, value, q])
    rgb = np.stack([r, g, b], axis=-1)
    return (rgb * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path: str, image: np.ndarray) -> None:
    """Binary portable pixmap (P6)."""
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(image.astype(np.uint8).tobytes())


def render_flow_image(records: np.ndarray, t0: int, t1: int,
                      geometry: SensorGeometry, path: str,
                      speed_clip: float | None = None) -> np.ndarray:
    img = flow_image(records, t0, t1, geometry, speed_clip)
    write_ppm(path, img)
    return img
