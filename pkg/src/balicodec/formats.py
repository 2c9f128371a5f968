"""File formats: .pts annotations, .box sidecars, tensor containers, reports.

The tensor container is a little-endian binary of named float32 sections:

    magic            4 bytes  "BALI"
    format_version   u32      currently 1
    section_count    u32
    per section:
        name_len u32, name utf-8 bytes
        kind_len u32, kind utf-8 bytes (opaque tag, preserved on round trip)
        dtype    u32 (0 = IEEE-754 binary32)
        ndim     u32
        dims     ndim x u32
        offset   u64 (absolute file offset of the payload)
    payloads         row-major little-endian float32, prod(dims) scalars each

Corruption classes map to :class:`ContainerError` codes ``bad_magic``,
``truncated_payload`` and ``dim_overflow``.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContainerError, PtsParseError, ValidationError
from .geometry import GridSpec, LandmarkSet, scheme_from_count
from .metrics import EvalReport

__all__ = [
    "parse_pts",
    "write_pts",
    "suspect_one_based",
    "parse_box",
    "write_box",
    "read_container",
    "write_container",
    "report_to_csv",
    "report_to_json",
]

MAGIC = b"BALI"
FORMAT_VERSION = 1
DTYPE_F32 = 0
_MAX_NDIM = 16
_MAX_ELEMENTS = 1 << 32


# ---------------------------------------------------------------------------
# .pts annotation files (300W text layout)
# ---------------------------------------------------------------------------

def parse_pts(text: str, grid: GridSpec | None = None, one_based: bool = False) -> LandmarkSet:
    """Parse the 300W text layout; errors carry the offending line number.

    ``grid`` defaults to 256x256 (the crop size annotations refer to);
    ``one_based`` shifts coordinates down by one pixel.
    """
    grid = grid or GridSpec(256, 256)
    lines = text.splitlines()
    idx = 0

    def next_content() -> tuple[int, str]:
        nonlocal idx
        while idx < len(lines):
            stripped = lines[idx].strip()
            idx += 1
            if stripped:
                return idx, stripped
        raise PtsParseError("unexpected end of file", len(lines))

    lineno, header = next_content()
    if not header.replace(" ", "").startswith("version:"):
        raise PtsParseError(f"expected 'version:' header, got {header!r}", lineno)
    lineno, counts = next_content()
    if not counts.replace(" ", "").startswith("n_points:"):
        raise PtsParseError(f"expected 'n_points:' header, got {counts!r}", lineno)
    try:
        n_points = int(counts.split(":", 1)[1])
    except ValueError:
        raise PtsParseError(f"unparseable point count in {counts!r}", lineno) from None
    lineno, brace = next_content()
    if brace != "{":
        raise PtsParseError(f"expected '{{', got {brace!r}", lineno)

    points = []
    while True:
        lineno, content = next_content()
        if content == "}":
            break
        parts = content.split()
        if len(parts) != 2:
            raise PtsParseError(f"expected 'x y' pair, got {content!r}", lineno)
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise PtsParseError(f"unparseable coordinates {content!r}", lineno) from None
        if len(points) > n_points:
            raise PtsParseError(f"more than the declared {n_points} points", lineno)
    if len(points) != n_points:
        raise PtsParseError(
            f"declared {n_points} points but found {len(points)}", lineno
        )
    pts = np.asarray(points, float)
    if one_based:
        pts = pts - 1.0
    return LandmarkSet(scheme_from_count(n_points), pts, grid)


def write_pts(l: LandmarkSet) -> str:
    """Render the 300W text layout with 6-decimal coordinates."""
    lines = ["version: 1", f"n_points: {len(l)}", "{"]
    lines += [f"{u:.6f} {v:.6f}" for u, v in l.points]
    lines.append("}")
    return "\n".join(lines) + "\n"


def suspect_one_based(sets: Iterable[LandmarkSet]) -> bool:
    """Heuristic: a whole dataset whose minimum coordinate is >= 1 was likely
    written with the 1-based convention."""
    seen = False
    for l in sets:
        seen = True
        if l.points.min() < 1.0:
            return False
    return seen


# ---------------------------------------------------------------------------
# .box sidecar (four whitespace-separated reals: x y w h)
# ---------------------------------------------------------------------------

def parse_box(text: str) -> tuple[float, float, float, float]:
    parts = text.split()
    if len(parts) != 4:
        raise ValidationError(f"box sidecar needs 4 values 'x y w h', got {len(parts)}")
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"unparseable box sidecar {text!r}") from None
    return (x, y, w, h)


def write_box(box: Sequence[float]) -> str:
    return " ".join(f"{float(v):.6f}" for v in box) + "\n"


# ---------------------------------------------------------------------------
# binary tensor container
# ---------------------------------------------------------------------------

def write_container(sections: Mapping[str, tuple[str, np.ndarray]]) -> bytes:
    """Serialize named (kind, array) sections; arrays are stored as float32."""
    if not sections:
        raise ValidationError("container needs at least one section")
    entries = []
    payloads = []
    for name, (kind, array) in sections.items():
        arr = np.ascontiguousarray(np.asarray(array), dtype="<f4")
        if arr.ndim == 0 or arr.ndim > _MAX_NDIM:
            raise ValidationError(f"section {name!r}: ndim must be 1..{_MAX_NDIM}")
        entries.append((name.encode(), kind.encode(), arr.shape))
        payloads.append(arr.tobytes())

    table_size = sum(
        4 + len(n) + 4 + len(k) + 4 + 4 + 4 * len(shape) + 8 for n, k, shape in entries
    )
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<II", FORMAT_VERSION, len(entries)))
    offset = 12 + table_size
    for (name, kind, shape), payload in zip(entries, payloads):
        out.write(struct.pack("<I", len(name)))
        out.write(name)
        out.write(struct.pack("<I", len(kind)))
        out.write(kind)
        out.write(struct.pack("<II", DTYPE_F32, len(shape)))
        out.write(struct.pack(f"<{len(shape)}I", *shape))
        out.write(struct.pack("<Q", offset))
        offset += len(payload)
    for payload in payloads:
        out.write(payload)
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError("truncated_payload", f"file ends inside {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def read_container(data: bytes) -> dict[str, tuple[str, np.ndarray]]:
    """Inverse of :func:`write_container`; unknown kinds pass through opaquely."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise ContainerError("bad_magic", "file does not start with the BALI magic")
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise ContainerError("bad_header", f"unsupported format version {version}")
    count = r.u32("section count")
    if count == 0 or count > 4096:
        raise ContainerError("bad_header", f"implausible section count {count}")
    sections: dict[str, tuple[str, np.ndarray]] = {}
    headers = []
    for _ in range(count):
        name = r.take(r.u32("name length"), "section name").decode("utf-8", "replace")
        kind = r.take(r.u32("kind length"), "section kind").decode("utf-8", "replace")
        dtype = r.u32("dtype code")
        if dtype != DTYPE_F32:
            raise ContainerError("bad_header", f"unknown dtype code {dtype}")
        ndim = r.u32("ndim")
        if ndim == 0 or ndim > _MAX_NDIM:
            raise ContainerError("dim_overflow", f"section {name!r}: ndim {ndim} out of range")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim, "dims"))
        n_elem = 1
        for d in dims:
            n_elem *= d
            if n_elem > _MAX_ELEMENTS:
                raise ContainerError(
                    "dim_overflow", f"section {name!r}: dims {dims} overflow the element cap"
                )
        offset = r.u64("payload offset")
        headers.append((name, kind, dims, n_elem, offset))
    for name, kind, dims, n_elem, offset in headers:
        end = offset + 4 * n_elem
        if offset > len(data) or end > len(data):
            raise ContainerError(
                "truncated_payload",
                f"section {name!r}: payload [{offset}, {end}) exceeds file size {len(data)}",
            )
        arr = np.frombuffer(data[offset:end], dtype="<f4").reshape(dims).copy()
        arr.flags.writeable = False
        sections[name] = (kind, arr)
    return sections


# ---------------------------------------------------------------------------
# evaluation report serialization
# ---------------------------------------------------------------------------

def report_to_csv(report: EvalReport, names: Sequence[str] | None = None) -> str:
    """Per-sample rows with a header, RFC-4180 quoting."""
    names = names if names is not None else [str(i) for i in range(len(report.per_sample_nme))]
    if len(names) != len(report.per_sample_nme):
        raise ValidationError("need one name per per-sample error")
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(["sample", "nme"])
    for name, err in zip(names, report.per_sample_nme):
        writer.writerow([name, f"{err:.9f}"])
    return buf.getvalue()


def report_to_json(report: EvalReport, normalization: str | None = None) -> str:
    """Summary with stable key order."""
    payload = {
        "count": len(report.per_sample_nme),
        "mean_nme": report.mean_nme,
        "auc": report.auc,
        "fr": report.fr,
        "tau": report.tau,
    }
    if normalization is not None:
        payload["normalization"] = normalization
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
