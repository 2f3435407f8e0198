"""Point-cloud readers, 16-bit PGM depth maps, checkpoints, CSV/JSON run outputs.

Byte layouts are documented in FORMATS.md at the repository root.
"""
from __future__ import annotations

import csv
import json
import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError
from .geometry import PointCloud
from .numerics import ParamStore
from .renderer import DepthMap

CHECKPOINT_MAGIC = b"C2PT"
CHECKPOINT_VERSION = 1
PGM_MAXVAL = 65535
HISTORY_FIELDS = ("step", "L_intra", "L_cross", "sigma", "total")


# -- point clouds ----------------------------------------------------------------

def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _floats(tokens, lineno: int, path) -> list[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"non-numeric token in {tokens!r}", f"{path}:{lineno}") from None
    if not all(np.isfinite(values)):
        raise ParseError("non-finite coordinate", f"{path}:{lineno}")
    return values


def load_cloud(path, fmt: str | None = None) -> PointCloud:
    """Read an ``xyz`` text file (three numbers per line) or the vertex list of an ``off`` file."""
    path = Path(path)
    fmt = fmt or ("off" if path.suffix.lower() == ".off" else "xyz")
    text = path.read_text()
    if fmt == "xyz":
        pts = []
        for lineno, tokens in _data_lines(text):
            if len(tokens) != 3:
                raise ParseError(f"expected 3 coordinates, got {len(tokens)}", f"{path}:{lineno}")
            pts.append(_floats(tokens, lineno, path))
    elif fmt == "off":
        pts = _parse_off(text, path)
    else:
        raise ParseError(f"unknown cloud format {fmt!r}")
    if not pts:
        raise ParseError("no vertices", str(path))
    return PointCloud(np.array(pts), path.stem)


def _parse_off(text: str, path) -> list[list[float]]:
    lines = _data_lines(text)
    try:
        lineno, tokens = next(lines)
    except StopIteration:
        raise ParseError("empty file", f"{path}:1") from None
    if not tokens[0].endswith("OFF"):
        raise ParseError("missing OFF header", f"{path}:{lineno}")
    counts = tokens[1:]
    if not counts:
        try:
            lineno, counts = next(lines)
        except StopIteration:
            raise ParseError("missing vertex/face counts", f"{path}:{lineno + 1}") from None
    if len(counts) < 2 or not all(c.isdigit() for c in counts[:3]):
        raise ParseError(f"bad counts line {counts!r}", f"{path}:{lineno}")
    n_vertices = int(counts[0])
    pts = []
    for _ in range(n_vertices):
        try:
            lineno, tokens = next(lines)
        except StopIteration:
            raise ParseError(f"file ends after {len(pts)} of {n_vertices} vertices",
                             f"{path}:{lineno + 1}") from None
        if len(tokens) < 3:
            raise ParseError(f"vertex needs 3 coordinates, got {len(tokens)}", f"{path}:{lineno}")
        pts.append(_floats(tokens[:3], lineno, path))
    return pts  # faces are ignored


def save_cloud_xyz(cloud: PointCloud, path) -> None:
    Path(path).write_text("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in cloud.points.tolist()))


# -- depth maps ------------------------------------------------------------------

def quantize_depth(depth_map: DepthMap) -> tuple[np.ndarray, float, float]:
    """Occupied depths mapped linearly from [z_min, z_max] to [65535, 1]; empty pixels 0."""
    values = np.zeros(depth_map.depth.shape, dtype=np.uint16)
    if not depth_map.occupied.any():
        return values, 0.0, 0.0
    z = depth_map.depth[depth_map.occupied]
    z_min, z_max = float(z.min()), float(z.max())
    if z_max > z_min:
        q = PGM_MAXVAL - np.rint((z - z_min) / (z_max - z_min) * (PGM_MAXVAL - 1))
    else:
        q = np.full(z.shape, PGM_MAXVAL)
    values[depth_map.occupied] = q.astype(np.uint16)
    return values, z_min, z_max


def save_depth_pgm(depth_map: DepthMap, path) -> None:
    values, z_min, z_max = quantize_depth(depth_map)
    header = f"P5\n# zmin={z_min!r} zmax={z_max!r}\n{depth_map.width} {depth_map.height}\n{PGM_MAXVAL}\n"
    Path(path).write_bytes(header.encode("ascii") + values.astype(">u2").tobytes())


_TOKEN = re.compile(rb"\s*(#[^\n]*\n|\S+)")


def load_depth_pgm(path) -> DepthMap:
    """Inverse of :func:`save_depth_pgm`, exact up to the quantization step.

    Without the ``zmin``/``zmax`` comment the range defaults to [0, 1].
    """
    data = Path(path).read_bytes()
    pos = 0
    tokens: list[bytes] = []
    comments: list[str] = []
    while len(tokens) < 4:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ParseError("truncated PGM header", f"{path}:byte {pos}")
        tok = m.group(1)
        pos = m.end()
        if tok.startswith(b"#"):
            comments.append(tok.decode("ascii", "replace"))
        else:
            tokens.append(tok)
    if tokens[0] != b"P5":
        raise ParseError(f"not a binary PGM (magic {tokens[0]!r})", f"{path}:byte 0")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("non-integer PGM header field", f"{path}:byte {pos}") from None
    if maxval != PGM_MAXVAL:
        raise ParseError(f"maxval must be {PGM_MAXVAL}, got {maxval}", f"{path}:byte {pos}")
    pos += 1  # single whitespace byte after maxval
    body = data[pos:]
    if len(body) != 2 * width * height:
        raise ParseError(f"expected {2 * width * height} sample bytes, found {len(body)}", f"{path}:byte {pos}")
    values = np.frombuffer(body, dtype=">u2").reshape(height, width).astype(np.int64)
    z_min, z_max = 0.0, 1.0
    for c in comments:
        m = re.search(r"zmin=(\S+)\s+zmax=(\S+)", c)
        if m:
            z_min, z_max = float(m.group(1)), float(m.group(2))
    occupied = values > 0
    depth = np.zeros((height, width))
    q = values[occupied]
    z = z_min + (PGM_MAXVAL - q) / (PGM_MAXVAL - 1) * (z_max - z_min)
    # endpoints reproduce the stored range exactly
    z = np.where(q == PGM_MAXVAL, z_min, np.where(q == 1, z_max, z))
    depth[occupied] = z
    return DepthMap(depth, occupied)


# -- checkpoints -----------------------------------------------------------------

def checkpoint_bytes(store: ParamStore) -> bytes:
    out = [CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(store))]
    for name, entry in store.entries.items():
        raw = name.encode("utf-8")
        shape = entry.values.shape
        out.append(struct.pack("<Q", len(raw)) + raw)
        out.append(struct.pack(f"<Q{len(shape)}Q", len(shape), *shape))
        out.append(np.ascontiguousarray(entry.values, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(store: ParamStore, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(store))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"short read: wanted {n} bytes at offset {self.pos}, file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def parse_checkpoint(data: bytes, frozen: bool = False) -> ParamStore:
    r = _Reader(data)
    magic = r.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    (version,) = struct.unpack("<I", r.take(4))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    store = ParamStore()
    for _ in range(r.u64()):
        try:
            name = r.take(r.u64()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry name is not UTF-8: {exc}") from None
        shape = tuple(r.u64() for _ in range(r.u64()))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape)
        try:
            store.add(name, values)
        except KeyError as exc:
            raise FormatError(str(exc)) from None
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after last entry")
    store.frozen = frozen
    return store


def load_checkpoint(path, frozen: bool = False) -> ParamStore:
    return parse_checkpoint(Path(path).read_bytes(), frozen)


# -- run outputs -----------------------------------------------------------------

def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for row in history:
            writer.writerow([row["step"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])


def read_history_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"step": int(r["step"]), **{k: float(r[k]) for k in HISTORY_FIELDS[1:]}}
                for r in csv.DictReader(fh)]


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
