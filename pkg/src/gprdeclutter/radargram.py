"""B-scan container and basic grid operations.

A radargram is an H x W amplitude grid: rows are time samples (depth axis),
columns are traces (A-scans along the survey line). All operations here are
pure functions returning new Radargram objects; the stored array is made
read-only so instances can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

CONTAINER_MAGIC = "GPRB1"


class ContainerFormatError(ValueError):
    """Raised for malformed container files; carries the failing byte offset."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Radargram:
    """Immutable B-scan: amplitude grid plus acquisition metadata."""

    data: np.ndarray
    trace_spacing: float = 0.01
    time_window: float | None = None
    label: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"radargram grid must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("radargram amplitudes must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray, label: str | None = None) -> "Radargram":
        """New radargram with this one's metadata and a replaced grid."""
        return Radargram(
            data,
            trace_spacing=self.trace_spacing,
            time_window=self.time_window,
            label=self.label if label is None else label,
        )


class Provenance(str, Enum):
    SIMULATED = "simulated"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class DatasetPair:
    """(raw, clutter-free) supervised pair; both grids share one shape."""

    raw: Radargram
    clutter_free: Radargram
    provenance: Provenance = Provenance.SIMULATED

    def __post_init__(self):
        if self.raw.data.shape != self.clutter_free.data.shape:
            raise ValueError(
                f"pair shape mismatch: raw {self.raw.data.shape} vs "
                f"clutter_free {self.clutter_free.data.shape}"
            )


@dataclass
class Dataset:
    pairs: list[DatasetPair] = field(default_factory=list)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def normalize_unit(r: Radargram) -> Radargram:
    """Affine map of the grid onto [0, 1]; a constant grid maps to all zeros."""
    lo = float(r.data.min())
    hi = float(r.data.max())
    if hi == lo:
        return r.with_data(np.zeros_like(r.data))
    return r.with_data((r.data - lo) / (hi - lo))


def resize_bilinear(r: Radargram, out_height: int, out_width: int) -> Radargram:
    """Bilinear resample with corner-aligned sample coordinates.

    Output pixel i maps to source coordinate i * (in - 1) / (out - 1); a
    singleton output dimension samples coordinate 0.
    """
    if out_height < 1 or out_width < 1:
        raise ValueError(f"target size must be positive, got {out_height}x{out_width}")
    if (out_height, out_width) == r.data.shape:
        return r
    resized = _resize_axis(_resize_axis(r.data, out_height, axis=0), out_width, axis=1)
    return r.with_data(resized)


def _resize_axis(arr: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = arr.shape[axis]
    if out_len == in_len:
        return arr
    if out_len == 1:
        coords = np.zeros(1)
    else:
        coords = np.arange(out_len) * ((in_len - 1) / (out_len - 1))
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, in_len - 1)
    frac = coords - lo
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = out_len
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def crop_window(r: Radargram, start_col: int, width: int) -> Radargram:
    """Keep columns start_col .. start_col+width-1 (1-based, inclusive)."""
    if start_col < 1 or width < 1 or start_col + width - 1 > r.width:
        raise ValueError(
            f"crop window [{start_col}, {start_col + width - 1}] out of range for width {r.width}"
        )
    return r.with_data(r.data[:, start_col - 1 : start_col - 1 + width])


def write_container(path, r: Radargram) -> None:
    """Write the single-scan container: text header line + binary32 LE payload.

    Header: `GPRB1 H W trace_spacing time_window label\\n`. time_window is
    `nan` when unset; float fields use repr so the text round-trips exactly.
    """
    if "\n" in r.label or "\r" in r.label:
        raise ValueError("label must not contain newlines")
    tw = float("nan") if r.time_window is None else float(r.time_window)
    header = f"{CONTAINER_MAGIC} {r.height} {r.width} {float(r.trace_spacing)!r} {tw!r} {r.label}\n"
    payload = np.ascontiguousarray(r.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(payload)


def read_container(path) -> Radargram:
    """Read a container file; inverse of write_container (bit-exact payload)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ContainerFormatError("missing header line", 0)
    try:
        header = raw[: nl].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ContainerFormatError("header is not valid UTF-8", 0) from exc
    parts = header.split(" ", 5)
    if parts[0] != CONTAINER_MAGIC:
        raise ContainerFormatError(f"bad magic {parts[0]!r}, expected {CONTAINER_MAGIC!r}", 0)
    if len(parts) < 5:
        raise ContainerFormatError("header has too few fields", 0)
    try:
        height = int(parts[1])
        width = int(parts[2])
        trace_spacing = float(parts[3])
        time_window = float(parts[4])
    except ValueError as exc:
        raise ContainerFormatError(f"unparseable header field: {exc}", 0) from exc
    label = parts[5] if len(parts) > 5 else ""
    if height < 1 or width < 1:
        raise ContainerFormatError(f"invalid dimensions {height}x{width}", 0)
    payload = raw[nl + 1 :]
    expected = height * width * 4
    if len(payload) != expected:
        raise ContainerFormatError(
            f"payload has {len(payload)} bytes, expected {expected}", nl + 1 + len(payload)
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    bad = ~np.isfinite(values)
    if bad.any():
        first = int(np.flatnonzero(bad.ravel())[0])
        raise ContainerFormatError("non-finite amplitude in payload", nl + 1 + 4 * first)
    return Radargram(
        values.astype(np.float64),
        trace_spacing=trace_spacing,
        time_window=None if np.isnan(time_window) else time_window,
        label=label,
    )
