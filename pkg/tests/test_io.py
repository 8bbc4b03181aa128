import json
import os

import numpy as np
import pytest

import linfbp as L
from linfbp import io
from linfbp.geometry import GridSpec, make_geometry
from linfbp.learn import TrainConfig, init_params, train


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def test_sinogram_roundtrip_is_bit_exact(tmp_path):
    g = make_geometry(7, 0.25, 5, detector_center_offset=0.5)
    sino = L.Sinogram(f32(rng(1).standard_normal((7, 5))), g, "filtered", {"dose_fraction": 0.25})
    path = io.save_sinogram(tmp_path / "s.f32", sino, {"command": "test"})
    back = io.load_sinogram(path)
    assert back.samples.tobytes() == sino.samples.tobytes()
    assert back.geometry == g and back.kind == "filtered"
    assert back.meta == {"dose_fraction": 0.25}


def test_sinogram_file_is_view_contiguous(tmp_path):
    g = make_geometry(3, 1.0, 2)
    samples = np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]])
    path = io.save_sinogram(tmp_path / "s.f32", L.Sinogram(samples, g))
    assert np.fromfile(path, dtype="<f4").tolist() == [1, 2, 3, 4, 5, 6]
    side = io.read_json(io.sidecar_path(path))
    assert side["shape"] == [2, 3] and side["layout"] == "view_major"
    assert side["geometry"]["n_bins"] == 3


def test_image_roundtrip_is_bit_exact(tmp_path):
    grid = GridSpec(4, 6, 0.5)
    img = L.ImageGrid(f32(rng(2).standard_normal(grid.shape)), grid)
    back = io.load_image(io.save_image(tmp_path / "i.f32", img))
    assert back.values.tobytes() == img.values.tobytes()
    assert back.grid == grid


def test_loaders_check_artifact_type(tmp_path):
    grid = GridSpec(2, 2, 1.0)
    path = io.save_image(tmp_path / "i.f32", L.ImageGrid(np.zeros((2, 2)), grid))
    with pytest.raises(ValueError):
        io.load_sinogram(path)


def test_raw_size_mismatch_detected(tmp_path):
    path = io.write_raw(tmp_path / "a.f32", np.zeros((2, 3)), {})
    with open(path, "ab") as fh:
        fh.write(b"\0\0\0\0")
    with pytest.raises(ValueError):
        io.read_raw(path)


def test_non_finite_arrays_rejected():
    with pytest.raises(ValueError):
        io.array_bytes([1.0, np.nan])


def test_pgm_roundtrip_and_mapping(tmp_path):
    values = np.array([[0.0, 0.5], [1.0, 2.0]])
    path = io.write_pgm(tmp_path / "a.pgm", values, width=1.0, level=0.5)
    levels = io.read_pgm(path)
    assert levels.dtype == np.uint16
    assert levels.tolist() == [[0, 32768], [65535, 65535]]
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n2 2\n65535\n")
    assert raw[-2:] == b"\xff\xff"  # big-endian


def test_pgm_default_window_spans_range():
    values = rng(3).uniform(-2, 5, (5, 7))
    levels = io.to_pgm_levels(values)
    assert levels.min() == 0 and levels.max() == 65535
    assert not io.to_pgm_levels(np.ones((2, 2))).any()


def test_pgm_files_record_window():
    files = io.pgm_files("x.pgm", np.array([[1.0, 3.0]]))
    side = json.loads(files["x.pgm.json"])
    assert side["window_width"] == 2.0 and side["window_level"] == 2.0


def test_phantom_roundtrip(tmp_path):
    ph = L.random_phantom(4, 5)
    assert io.load_phantom(io.save_phantom(tmp_path / "p.json", ph)) == ph


def test_checkpoint_roundtrip_without_momentum(tmp_path):
    ds = [(L.analytic_sinogram(L.random_phantom(0, 3), make_geometry(23, 2 / 16, 6)),
           L.rasterize(L.random_phantom(0, 3), GridSpec(16, 16, 2 / 16)))]
    out = train(TrainConfig(epochs=1, lr=1e-3, basis_family="fourier", k=1), ds)
    back, head = io.load_checkpoint(io.save_checkpoint(tmp_path / "m.ckpt", out, {"x": 1}))
    assert back.params.to_vector().tobytes() == out.params.to_vector().tobytes()
    assert back.state.momentum_buf is None and back.state.step == out.state.step
    assert back.log == out.log and head["x"] == 1
    assert head["architecture"] == {"hidden": 8, "n_basis": 3, "k1": 5, "k2": 5}


def test_checkpoint_blob_layout(tmp_path):
    params = init_params(5)
    from linfbp.learn import OptimState, TrainResult

    result = TrainResult(params, OptimState.zeros(params.size), [], 0)
    raw = io.checkpoint_bytes(result, {})
    assert raw[:8] == io.CHECKPOINT_MAGIC
    n = int.from_bytes(raw[8:12], "little")
    blob = np.frombuffer(raw[12 + n:], dtype="<f8")
    assert blob.size == 2 * 253
    assert np.array_equal(blob[:40], params.w1.ravel())


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        io.load_checkpoint(path)


def test_csv_roundtrip_keeps_floats(tmp_path):
    rows = [{"epoch": 1, "sample_index": 0, "loss": 0.1 + 0.2}]
    path = io.write_csv(tmp_path / "log.csv", rows, io.TRAIN_LOG_FIELDS)
    back = io.read_csv(path)
    assert float(back[0]["loss"]) == 0.1 + 0.2
    assert path.read_text().splitlines()[0] == "epoch,sample_index,loss"


def test_atomic_write_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.atomic_write(tmp_path / "nope" / "a.bin", b"x")


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "a.bin"
    target.write_bytes(b"old")
    io.atomic_write(target, b"new")
    assert target.read_bytes() == b"new"
    assert os.listdir(tmp_path) == ["a.bin"]


def test_write_files_checks_directory_first(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.write_files(tmp_path / "missing", {"a": b"1"})
