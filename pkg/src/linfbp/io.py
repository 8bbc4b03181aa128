"""File formats: raw float32 arrays with JSON sidecars, 16-bit PGM, checkpoints, CSV.

Arrays are stored as little-endian float32 in C order. Sinograms are written
view-contiguous: ``M`` records of ``N`` detector samples, i.e. the transpose of
the in-memory ``N x M`` layout. Images are written row by row, top row first.
Every array file ``name.f32`` has a sidecar ``name.f32.json``.

PGM previews map a window ``[level - width/2, level + width/2]`` linearly onto
``0..65535`` (clipped, rounded half up) and are written big-endian as the
format requires. By default the window spans the image's own min..max.

Checkpoints are ``b"LINFBPCK"``, a little-endian uint32 header length, a UTF-8
JSON header, then a little-endian float64 blob: conv1 weight, conv1 bias,
conv2 weight, conv2 bias, then the optimizer's square average and (if
momentum is used) its momentum buffer.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .geometry import Geometry, GridSpec
from .learn import ModelParams, OptimState, TrainResult
from .phantom import PhantomSpec
from .projector import ImageGrid, Sinogram

SIDECAR_SUFFIX = ".json"
CHECKPOINT_MAGIC = b"LINFBPCK"
CHECKPOINT_VERSION = 1
PGM_MAX = 65535


def atomic_write(path, data: bytes) -> Path:
    """Write ``data`` to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"output directory {path.parent} does not exist")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps_json(obj))


def read_json(path):
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


# raw arrays ---------------------------------------------------------------


def array_bytes(values) -> bytes:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def raw_files(name: str, values, meta: dict) -> dict:
    """``{name: float32 bytes, name + ".json": sidecar bytes}`` without touching disk."""
    arr = np.asarray(values)
    header = dict(meta, dtype="float32", byte_order="little", shape=list(arr.shape))
    return {name: array_bytes(arr), name + SIDECAR_SUFFIX: dumps_json(header)}


def write_files(directory, files: dict) -> list:
    """Write a ``{relative name: bytes}`` mapping; every payload is built before any write."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"output directory {directory} does not exist")
    return [atomic_write(directory / name, data) for name, data in files.items()]


def write_raw(path, values, meta: dict) -> Path:
    """``values`` as float32 LE plus a sidecar holding ``meta`` and the stored shape."""
    path = Path(path)
    write_files(path.parent, raw_files(path.name, values, meta))
    return path


def read_raw(path):
    """Returns ``(float32 array, sidecar dict)``."""
    meta = read_json(sidecar_path(path))
    if meta.get("dtype") != "float32" or meta.get("byte_order") != "little":
        raise ValueError(f"{path}: unsupported array encoding")
    shape = tuple(meta["shape"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: {data.size} values, sidecar says shape {shape}")
    return data.reshape(shape), meta


def sinogram_files(name: str, sino: Sinogram, provenance: dict | None = None) -> dict:
    meta = {
        "artifact": "sinogram",
        "layout": "view_major",
        "geometry": sino.geometry.to_dict(),
        "kind": sino.kind,
        "meta": sino.meta,
        "provenance": provenance or {},
    }
    return raw_files(name, sino.samples.T, meta)


def save_sinogram(path, sino: Sinogram, provenance: dict | None = None) -> Path:
    path = Path(path)
    write_files(path.parent, sinogram_files(path.name, sino, provenance))
    return path


def load_sinogram(path) -> Sinogram:
    data, meta = read_raw(path)
    if meta.get("artifact") != "sinogram":
        raise ValueError(f"{path} is not a sinogram")
    geometry = Geometry.from_dict(meta["geometry"])
    if data.shape != (geometry.n_views, geometry.n_bins):
        raise ValueError(f"{path}: stored shape {data.shape} does not match the geometry")
    return Sinogram(data.T.astype(np.float64), geometry, meta["kind"], meta.get("meta", {}))


def image_files(name: str, image: ImageGrid, provenance: dict | None = None) -> dict:
    meta = {"artifact": "image", "grid": image.grid.to_dict(), "provenance": provenance or {}}
    return raw_files(name, image.values, meta)


def save_image(path, image: ImageGrid, provenance: dict | None = None) -> Path:
    path = Path(path)
    write_files(path.parent, image_files(path.name, image, provenance))
    return path


def load_image(path) -> ImageGrid:
    data, meta = read_raw(path)
    if meta.get("artifact") != "image":
        raise ValueError(f"{path} is not an image")
    return ImageGrid(data.astype(np.float64), GridSpec.from_dict(meta["grid"]))


# PGM ----------------------------------------------------------------------


def pgm_window(values, width: float | None = None, level: float | None = None):
    lo, hi = float(np.min(values)), float(np.max(values))
    if width is None:
        width = hi - lo
    if level is None:
        level = 0.5 * (lo + hi)
    return float(width), float(level)


def to_pgm_levels(values, width: float | None = None, level: float | None = None) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    width, level = pgm_window(values, width, level)
    if width <= 0.0:
        return np.zeros(values.shape, dtype=np.uint16)
    scaled = (values - (level - 0.5 * width)) / width * PGM_MAX
    return np.floor(np.clip(scaled, 0.0, PGM_MAX) + 0.5).astype(np.uint16)


def pgm_files(name: str, values, provenance: dict | None = None,
              width: float | None = None, level: float | None = None) -> dict:
    """PGM preview plus a sidecar recording the window used."""
    width, level = pgm_window(values, width, level)
    side = {"artifact": "preview", "window_width": width, "window_level": level,
            "maxval": PGM_MAX, "provenance": provenance or {}}
    return {name: pgm_bytes(values, width, level), name + SIDECAR_SUFFIX: dumps_json(side)}


def pgm_bytes(values, width: float | None = None, level: float | None = None) -> bytes:
    levels = to_pgm_levels(values, width, level)
    if levels.ndim != 2:
        raise ValueError("PGM needs a 2-D image")
    h, w = levels.shape
    return f"P5\n{w} {h}\n{PGM_MAX}\n".encode("ascii") + levels.astype(">u2").tobytes()


def write_pgm(path, values, width: float | None = None, level: float | None = None) -> Path:
    return atomic_write(path, pgm_bytes(values, width, level))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5" or maxval != PGM_MAX:
        raise ValueError(f"{path}: only 16-bit binary PGM is supported")
    pixels = np.frombuffer(raw, dtype=">u2", count=w * h, offset=pos + 1)
    return pixels.reshape(h, w).astype(np.uint16)


# phantoms -----------------------------------------------------------------


def phantom_bytes(phantom: PhantomSpec, provenance: dict | None = None) -> bytes:
    return dumps_json(dict(phantom.to_dict(), artifact="phantom", provenance=provenance or {}))


def save_phantom(path, phantom: PhantomSpec, provenance: dict | None = None) -> Path:
    return atomic_write(path, phantom_bytes(phantom, provenance))


def load_phantom(path) -> PhantomSpec:
    return PhantomSpec.from_dict(read_json(path))


# checkpoints --------------------------------------------------------------


def checkpoint_bytes(result: TrainResult, header: dict) -> bytes:
    params, state = result.params, result.state
    blocks = [params.to_vector(), state.square_avg]
    if state.momentum_buf is not None:
        blocks.append(state.momentum_buf)
    blob = np.concatenate(blocks).astype("<f8")
    head = dict(header)
    head.update({
        "version": CHECKPOINT_VERSION,
        "architecture": {"hidden": params.hidden, "n_basis": params.n_basis,
                         "k1": params.kernel_sizes[0], "k2": params.kernel_sizes[1]},
        "epoch": result.epochs_done,
        "optimizer": {"rho": state.rho, "eps": state.eps, "momentum": state.momentum,
                      "step": state.step, "has_momentum_buf": state.momentum_buf is not None},
        "blob_order": ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
                       "optim.square_avg"]
                      + (["optim.momentum_buf"] if state.momentum_buf is not None else []),
        "log": result.log,
    })
    text = json.dumps(head, sort_keys=True).encode("utf-8")
    return CHECKPOINT_MAGIC + struct.pack("<I", len(text)) + text + blob.tobytes()


def save_checkpoint(path, result: TrainResult, header: dict) -> Path:
    return atomic_write(path, checkpoint_bytes(result, header))


def load_checkpoint(path):
    """Returns ``(TrainResult, header)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack_from("<I", raw, off)
    head = json.loads(raw[off + 4:off + 4 + n].decode("utf-8"))
    blob = np.frombuffer(raw, dtype="<f8", offset=off + 4 + n).astype(np.float64)
    arch, opt = head["architecture"], head["optimizer"]
    hidden, c, k1, k2 = arch["hidden"], arch["n_basis"], arch["k1"], arch["k2"]
    template = ModelParams(np.zeros((hidden, 1, k1)), np.zeros(hidden),
                           np.zeros((c, hidden, k2)), np.zeros(c))
    size = template.size
    expected = size * (3 if opt["has_momentum_buf"] else 2)
    if blob.size != expected:
        raise ValueError(f"{path}: blob holds {blob.size} values, expected {expected}")
    params = template.with_vector(blob[:size])
    buf = blob[2 * size:3 * size].copy() if opt["has_momentum_buf"] else None
    state = OptimState(blob[size:2 * size].copy(), buf, opt["rho"], opt["eps"],
                       opt["momentum"], opt["step"])
    return TrainResult(params, state, list(head.get("log", [])), head["epoch"]), head


# CSV ----------------------------------------------------------------------

TRAIN_LOG_FIELDS = ("epoch", "sample_index", "loss")
METRIC_FIELDS = ("sample_id", "method", "psnr_db", "nmse", "ssim")


def csv_bytes(rows, fields) -> bytes:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue().encode("utf-8")


def write_csv(path, rows, fields) -> Path:
    return atomic_write(path, csv_bytes(rows, fields))


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
