"""File formats: binary PGM (P5) for frames and maps, CSV for ROI traces."""
from __future__ import annotations

import csv
import os
import re
from pathlib import Path

import numpy as np

from .core import BinaryMap, Frame, Roi, SegmentationMap

SEG_LEVELS = np.array([0, 85, 170, 255], dtype=np.uint8)

TRACE_HEADER = ["frame_index", "x_min", "y_min", "x_max", "y_max", "mode"]


class DataError(Exception):
    """Malformed or missing input data."""


def write_pgm(path, image: np.ndarray):
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("PGM writer expects a 2D uint8 array")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 is supported")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + w * h]
    if len(raw) != w * h:
        raise DataError(f"{path}: expected {w * h} pixel bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()


def save_frame(path, frame: Frame):
    write_pgm(path, frame.pixels)


def load_frame(path, index: int = 0) -> Frame:
    return Frame(read_pgm(path), index)


def save_segmentation(path, seg: SegmentationMap):
    write_pgm(path, SEG_LEVELS[seg.classes])


def load_segmentation(path) -> SegmentationMap:
    img = read_pgm(path)
    lut = np.full(256, 255, dtype=np.uint8)
    lut[SEG_LEVELS] = np.arange(4, dtype=np.uint8)
    classes = lut[img]
    if np.any(classes == 255):
        raise DataError(f"{path}: segmentation PGM has values outside {{0, 85, 170, 255}}")
    return SegmentationMap(classes)


def save_binary_map(path, m: BinaryMap):
    write_pgm(path, (m.bits * 255).astype(np.uint8))


def load_binary_map(path) -> BinaryMap:
    return BinaryMap((read_pgm(path) > 127).astype(np.uint8))


def frame_paths(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pgm")
    if not paths:
        raise DataError(f"{directory}: no .pgm files")
    return paths


def load_frame_dir(directory) -> list[Frame]:
    """Generic frame-directory loader: every ``*.pgm`` in name order."""
    return [load_frame(p, i) for i, p in enumerate(frame_paths(directory))]


def load_segmentation_dir(directory) -> list[SegmentationMap]:
    return [load_segmentation(p) for p in frame_paths(directory)]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_roi_trace(path, rows):
    """``rows``: iterable of (frame_index, Roi or None, mode string)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for idx, roi, mode in rows:
            vals = ["", "", "", ""] if roi is None else [_fmt(v) for v in roi.as_tuple()]
            w.writerow([idx, *vals, mode])


def read_roi_trace(path) -> list[tuple[int, Roi | None, str]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_HEADER:
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            coords = [row[k] for k in TRACE_HEADER[1:5]]
            roi = None if coords[0] == "" else Roi(*(float(c) for c in coords))
            out.append((int(row["frame_index"]), roi, row["mode"]))
    return out


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


GT_HEADER = ["frame_index", "x_min", "y_min", "x_max", "y_max", "pupil_x", "pupil_y"]


def write_groundtruth(path, rows):
    """``rows``: iterable of (frame_index, Roi or None, (x, y) or None)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GT_HEADER)
        for idx, roi, center in rows:
            vals = ["", "", "", ""] if roi is None else [_fmt(v) for v in roi.as_tuple()]
            c = ["", ""] if center is None else [_fmt(v) for v in center]
            w.writerow([idx, *vals, *c])


def read_groundtruth(path) -> list[tuple[int, Roi | None, tuple[float, float] | None]]:
    out = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != GT_HEADER:
                raise DataError(f"{path}: unexpected header {reader.fieldnames}")
            for row in reader:
                roi = None if row["x_min"] == "" else Roi(*(float(row[k]) for k in GT_HEADER[1:5]))
                c = None if row["pupil_x"] == "" else (float(row["pupil_x"]), float(row["pupil_y"]))
                out.append((int(row["frame_index"]), roi, c))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    return out


def frame_name(index: int) -> str:
    return f"{index:05d}.pgm"


def save_sequence(directory, frames, labels=None):
    directory = Path(directory)
    ensure_dir(directory / "frames")
    for f in frames:
        save_frame(directory / "frames" / frame_name(f.index), f)
    if labels is not None:
        ensure_dir(directory / "labels")
        for i, s in enumerate(labels):
            save_segmentation(directory / "labels" / frame_name(frames[i].index), s)


def sequence_dirs(root) -> list[Path]:
    """A sequence directory holds ``frames/``; a dataset root holds sequence subdirectories."""
    root = Path(root)
    if (root / "frames").is_dir():
        return [root]
    subs = sorted(p for p in root.iterdir() if (p / "frames").is_dir()) if root.is_dir() else []
    if not subs:
        raise DataError(f"{root}: no sequence directories (expected frames/ inside)")
    return subs
