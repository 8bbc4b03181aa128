"""``linfbp`` command-line interface.

Every command resolves one effective configuration (JSON config file, then
flags on top), validates it, builds all of its output files in memory and
only then writes them. Each artifact carries its provenance (command plus
effective configuration) so ``linfbp verify`` can rebuild it and compare
bytes.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import io as fio
from .geometry import Geometry, GridSpec, covers_grid
from .interp import BASIS_FAMILIES, BasisSet
from .learn import LInFBPModel, NumericalError, TrainConfig, train
from .metrics import aggregate, evaluate
from .phantom import analytic_sinogram, random_phantom, rasterize, shepp_logan
from .projector import ImageGrid, Sinogram, apply_low_dose, forward_project, subsample_views
from .recon import KernelBackprojector, build_backprojection_matrix, backproject
from .spectral import FILTER_KINDS, filter_sinogram, make_filter

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3

METHODS = ("ne_fbp", "li_fbp", "cu_fbp", "f_linfbp", "l_linfbp")
FIXED_KERNELS = {"ne_fbp": "nearest", "li_fbp": "linear", "cu_fbp": "cubic"}
LEARNED_FAMILIES = {"f_linfbp": "fourier", "l_linfbp": "linear"}
MATRIX_ORACLE_TOL = 1e-10

_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_SEED = {"type": "integer", "minimum": 0}


def _section(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"type": "string"},
        "name": {"type": "string", "pattern": r"^[A-Za-z0-9_.-]+$"},
        "output": {"type": "string"},
        "geometry": _section({
            "n_bins": _POS_INT, "bin_width_mm": _POS_NUM, "n_views": _POS_INT,
            "angle_span_rad": _POS_NUM, "detector_center_offset": {"type": "number"},
        }),
        "grid": _section({"height": _POS_INT, "width": _POS_INT, "pixel_size": _POS_NUM}),
        "phantom": _section({
            "source": {"enum": ["shepp_logan", "random", "file"]},
            "seed": _SEED, "n_ellipses": _POS_INT, "path": {"type": "string"},
            "fov_radius": _POS_NUM,
        }),
        "projection": _section({
            "mode": {"enum": ["analytic", "pixel_driven"]}, "bin_integrated": {"type": "boolean"},
        }),
        "degradation": _section({
            "dose_fraction": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
            "incident_counts": _POS_NUM,
            "keep_views": {"type": ["integer", "null"], "minimum": 1},
            "seed": _SEED,
        }),
        "dataset": _section({"count": _POS_INT, "first_seed": _SEED, "n_ellipses": _POS_INT}),
        "filter": {"enum": list(FILTER_KINDS)},
        "method": {"enum": list(METHODS)},
        "methods": {"type": "array", "items": {"enum": list(METHODS)}, "minItems": 1},
        "basis": {"enum": list(BASIS_FAMILIES)},
        "k": _POS_INT,
        "error_maps": {"type": "boolean"},
        "training": _section({
            "epochs": _POS_INT, "batch_size": {"const": 1}, "lr": {"type": "number", "minimum": 0},
            "gdl_weight": {"type": "number", "minimum": 0}, "seed": _SEED, "hidden": _POS_INT,
            "k1": _POS_INT, "k2": _POS_INT, "rho": {"type": "number", "minimum": 0, "maximum": 1},
            "eps": _POS_NUM, "momentum": {"type": "number", "minimum": 0, "maximum": 1},
            "ensemble": {"type": "boolean"}, "init": {"enum": ["fan_in", "linear"]},
            "init_noise": {"type": "number", "minimum": 0}, "shuffle": {"type": "boolean"},
            "stop_after": {"type": ["integer", "null"], "minimum": 1},
        }),
        "oracle": _section({"trials": _POS_INT, "seed": _SEED}),
        "inputs": _section({
            "phantom": {"type": "string"}, "sinogram": {"type": "string"},
            "reference": {"type": "string"}, "checkpoint": {"type": "string"},
            "checkpoints": {"type": "object", "additionalProperties": {"type": "string"}},
            "data": {"type": "string"}, "resume": {"type": "string"},
        }),
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


class ValidationError(Exception):
    pass


class UsageError(Exception):
    pass


def validate_config(cfg: dict) -> None:
    errors = sorted(_VALIDATOR.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ValidationError(f"config {where}: {e.message}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set_path(cfg: dict, dotted: str, value) -> None:
    *head, last = dotted.split(".")
    node = cfg
    for key in head:
        node = node.setdefault(key, {})
    node[last] = value


def _abspath(p: str) -> str:
    return str(Path(p).expanduser().resolve())


def _provenance(cfg: dict) -> dict:
    return {"command": cfg["command"], "config": cfg, "version": __version__}


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _grid(cfg: dict) -> GridSpec:
    g = cfg["grid"]
    return GridSpec(g["height"], g["width"], g["pixel_size"])


def _square_grid_defaults(cfg: dict, size: int = 128) -> None:
    fov = cfg.get("phantom", {}).get("fov_radius", 1.0)
    grid = cfg.setdefault("grid", {})
    grid.setdefault("height", size)
    grid.setdefault("width", grid["height"])
    grid.setdefault("pixel_size", 2.0 * fov / max(grid["height"], grid["width"]))


def _geometry(cfg: dict, grid: GridSpec | None = None) -> Geometry:
    """Geometry section with missing bin count / width fitted to ``grid``."""
    g = cfg["geometry"]
    g.setdefault("bin_width_mm", grid.pixel_size)
    if "n_bins" not in g:
        half = math.ceil(grid.circumradius() / g["bin_width_mm"] - 0.5)
        g["n_bins"] = 2 * max(half, 1) + 1
    g.setdefault("angle_span_rad", math.pi)
    g.setdefault("detector_center_offset", 0.0)
    return Geometry.from_dict(g)


def _phantom(cfg: dict):
    src = cfg.get("inputs", {}).get("phantom")
    if src:
        return fio.load_phantom(src)
    p = cfg["phantom"]
    if p["source"] == "file":
        if "path" not in p:
            raise ValidationError("phantom source 'file' needs a path")
        return fio.load_phantom(p["path"])
    if p["source"] == "random":
        return random_phantom(p["seed"], p["n_ellipses"], p["fov_radius"])
    return shepp_logan(p["fov_radius"])


def _read_provenance(path) -> dict:
    """Provenance stored with an artifact (sidecar, embedded JSON or checkpoint header)."""
    path = Path(path)
    if path.suffix == ".ckpt":
        return fio.load_checkpoint(path)[1].get("provenance", {})
    side = fio.sidecar_path(path)
    if side.exists():
        return fio.read_json(side).get("provenance", {})
    if path.suffix == ".json":
        return fio.read_json(path).get("provenance", {})
    return {}


def _csv_files(name: str, rows, fields, cfg: dict) -> dict:
    side = {"artifact": "table", "fields": list(fields), "provenance": _provenance(cfg)}
    return {name: fio.csv_bytes(rows, fields), name + fio.SIDECAR_SUFFIX: fio.dumps_json(side)}


def _filtered(sino: Sinogram, kind: str) -> Sinogram:
    if sino.kind == "filtered":
        return sino
    g = sino.geometry
    return filter_sinogram(sino, make_filter(kind, g.n_bins, g.bin_width))


def _load_model(path: str, method: str):
    result, header = fio.load_checkpoint(path)
    family = header["basis"]
    if family != LEARNED_FAMILIES[method]:
        raise ValidationError(f"{method} needs a {LEARNED_FAMILIES[method]} checkpoint, "
                              f"{path} holds a {family} model")
    basis = BasisSet(family, header["k"])
    return LInFBPModel(result.params, basis, header.get("ensemble", False)), header


def _reconstruct(method: str, sino: Sinogram, grid: GridSpec, filter_kind: str,
                 model=None) -> ImageGrid:
    filtered = _filtered(sino, filter_kind)
    if method in FIXED_KERNELS:
        return KernelBackprojector(FIXED_KERNELS[method])(filtered, grid)
    if model is None:
        raise ValidationError(f"method {method} needs --checkpoint")
    return model(filtered, grid)


def _load_pairs(directory) -> list:
    """``[(sample_id, sinogram, reference)]`` from ``<id>.sino.f32`` / ``<id>.ref.f32`` pairs."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"data directory {directory} does not exist")
    pairs = []
    for sino_path in sorted(directory.glob("*.sino.f32")):
        sid = sino_path.name[: -len(".sino.f32")]
        ref_path = directory / f"{sid}.ref.f32"
        if not ref_path.exists():
            raise ValidationError(f"{sino_path} has no matching {ref_path.name}")
        pairs.append((sid, fio.load_sinogram(sino_path), fio.load_image(ref_path)))
    if not pairs:
        raise ValidationError(f"no *.sino.f32 files in {directory}")
    return pairs


def _recon_grid(cfg: dict, geometry: Geometry, reference) -> GridSpec:
    """Explicit grid, else the reference's grid, else the largest square the detector covers."""
    g = cfg.get("grid", {})
    if "height" in g:
        return GridSpec(g["height"], g["width"], g.get("pixel_size", geometry.bin_width))
    if reference is not None and "pixel_size" not in g:
        return reference.grid
    ps = g.get("pixel_size", geometry.bin_width)
    size = 1
    while covers_grid(geometry, GridSpec(size + 1, size + 1, ps)):
        size += 1
    return GridSpec(size, size, ps)


# ---------------------------------------------------------------------------
# builders: effective config -> ({file name: bytes}, report)
# ---------------------------------------------------------------------------


def build_phantom(cfg: dict):
    name, prov = cfg["name"], _provenance(cfg)
    phantom = _phantom(cfg)
    image = rasterize(phantom, _grid(cfg))
    files = {f"{name}.json": fio.phantom_bytes(phantom, prov)}
    files.update(fio.image_files(f"{name}.f32", image, prov))
    files.update(fio.pgm_files(f"{name}.pgm", image.values, prov))
    return files, {"ellipses": len(phantom.ellipses), "shape": list(image.values.shape)}


def build_project(cfg: dict):
    phantom = _phantom(cfg)
    grid = _grid(cfg)
    geometry = _geometry(cfg, grid)
    proj = cfg["projection"]
    if proj["mode"] == "analytic":
        sino = analytic_sinogram(phantom, geometry, proj["bin_integrated"])
    else:
        sino = forward_project(rasterize(phantom, grid), geometry)
        sino = Sinogram(sino.samples, geometry, "raw", {"source": "pixel_driven"})
    files = fio.sinogram_files(f"{cfg['name']}.f32", sino, _provenance(cfg))
    return files, {"shape": [geometry.n_bins, geometry.n_views], "mode": proj["mode"]}


def _degrade(sino: Sinogram, deg: dict) -> Sinogram:
    if deg.get("keep_views"):
        sino = subsample_views(sino, deg["keep_views"])
    if deg.get("dose_fraction") is not None:
        sino = apply_low_dose(sino, deg["incident_counts"], deg["dose_fraction"], deg["seed"])
    return sino


def build_degrade(cfg: dict):
    src = cfg["inputs"]["sinogram"]
    sino = _degrade(fio.load_sinogram(src), cfg["degradation"])
    prov = dict(_provenance(cfg), parent=_read_provenance(src))
    files = fio.sinogram_files(f"{cfg['name']}.f32", sino, prov)
    return files, {"shape": list(sino.samples.shape)}


def build_filter(cfg: dict):
    src = cfg["inputs"]["sinogram"]
    sino = fio.load_sinogram(src)
    if sino.kind != "raw":
        raise ValidationError(f"{src} is already filtered")
    out = _filtered(sino, cfg["filter"])
    prov = dict(_provenance(cfg), parent=_read_provenance(src))
    return fio.sinogram_files(f"{cfg['name']}.f32", out, prov), {"filter": cfg["filter"]}


def build_reconstruct(cfg: dict):
    inputs, method, name = cfg["inputs"], cfg["method"], cfg["name"]
    sino = fio.load_sinogram(inputs["sinogram"])
    reference = fio.load_image(inputs["reference"]) if inputs.get("reference") else None
    grid = _recon_grid(cfg, sino.geometry, reference)
    model = None
    if method in LEARNED_FAMILIES:
        if not inputs.get("checkpoint"):
            raise ValidationError(f"method {method} needs --checkpoint")
        model, _ = _load_model(inputs["checkpoint"], method)
    image = _reconstruct(method, sino, grid, cfg["filter"], model)
    prov = dict(_provenance(cfg), parent=_read_provenance(inputs["sinogram"]))
    files = fio.image_files(f"{name}.f32", image, prov)
    files.update(fio.pgm_files(f"{name}.pgm", image.values, prov))
    report = {"method": method, "shape": list(image.values.shape)}
    if reference is not None:
        if reference.values.shape != image.values.shape:
            raise ValidationError("reference and reconstruction shapes differ")
        row = dict(sample_id=name, method=method,
                   **evaluate(image.values, reference.values).as_row())
        files.update(_csv_files(f"{name}_metrics.csv", [row], fio.METRIC_FIELDS, cfg))
        report["metrics"] = row
    return files, report


def _train_config(cfg: dict) -> TrainConfig:
    t = {k: v for k, v in cfg["training"].items() if k != "stop_after"}
    return TrainConfig(basis_family=cfg["basis"], k=cfg["k"], filter_kind=cfg["filter"], **t)


def build_train(cfg: dict, progress=None):
    config = _train_config(cfg)
    pairs = _load_pairs(cfg["inputs"]["data"])
    dataset = [(s, r) for _, s, r in pairs]
    resume = None
    if cfg["inputs"].get("resume"):
        resume, head = fio.load_checkpoint(cfg["inputs"]["resume"])
        if (head["basis"], head["k"]) != (config.basis_family, config.k):
            raise ValidationError("resume checkpoint has a different basis")
    result = train(config, dataset, resume=resume, stop_after=cfg["training"]["stop_after"],
                   progress=progress)
    name, prov = cfg["name"], _provenance(cfg)
    header = {"basis": config.basis_family, "k": config.k, "ensemble": config.ensemble,
              "filter_kind": config.filter_kind, "seed": config.seed,
              "geometry": dataset[0][0].geometry.to_dict(), "train_config": config.to_dict(),
              "provenance": prov}
    files = {f"{name}.ckpt": fio.checkpoint_bytes(result, header)}
    files.update(_csv_files(f"{name}_log.csv", result.log, fio.TRAIN_LOG_FIELDS, cfg))
    losses = result.epoch_losses()
    report = {"epochs_done": result.epochs_done,
              "first_epoch_loss": float(losses[0]) if losses.size else None,
              "last_epoch_loss": float(losses[-1]) if losses.size else None}
    return files, report


def _metric_rows(cfg: dict, methods):
    inputs = cfg["inputs"]
    checkpoints = dict(inputs.get("checkpoints", {}))
    if inputs.get("checkpoint"):
        for m in methods:
            if m in LEARNED_FAMILIES:
                checkpoints.setdefault(m, inputs["checkpoint"])
    models = {}
    for m in methods:
        if m in LEARNED_FAMILIES:
            if m not in checkpoints:
                raise ValidationError(f"method {m} needs a checkpoint")
            models[m] = _load_model(checkpoints[m], m)[0]
    rows, images = [], {}
    for sid, sino, ref in _load_pairs(inputs["data"]):
        for m in methods:
            image = _reconstruct(m, sino, ref.grid, cfg["filter"], models.get(m))
            rows.append(dict(sample_id=sid, method=m,
                             **evaluate(image.values, ref.values).as_row()))
            images[sid, m] = np.abs(image.values - ref.values)
    return rows, images


SUMMARY_FIELDS = ("method", "n", "psnr_db_mean", "psnr_db_std", "nmse_mean", "nmse_std",
                  "ssim_mean", "ssim_std")


def summarize(rows, methods) -> list:
    out = []
    for m in methods:
        sel = [r for r in rows if r["method"] == m]
        entry = {"method": m, "n": len(sel)}
        for key in ("psnr_db", "nmse", "ssim"):
            entry[f"{key}_mean"], entry[f"{key}_std"] = aggregate(r[key] for r in sel)
        out.append(entry)
    return out


def build_eval(cfg: dict):
    methods, name = list(dict.fromkeys(cfg["methods"])), cfg["name"]
    rows, errors = _metric_rows(cfg, methods)
    summary = summarize(rows, methods)
    files = _csv_files(f"{name}_metrics.csv", rows, fio.METRIC_FIELDS, cfg)
    files.update(_csv_files(f"{name}_summary.csv", summary, SUMMARY_FIELDS, cfg))
    if cfg.get("error_maps"):
        prov = _provenance(cfg)
        for (sid, m), err in errors.items():
            files.update(fio.pgm_files(f"{name}_{sid}_{m}_error.pgm", err, prov))
    return files, {"rows": len(rows), "summary": summary}


COMPARE_FIELDS = ("sample_id", "method_a", "method_b", "delta_psnr_db", "delta_nmse",
                  "delta_ssim")


def build_compare(cfg: dict):
    methods = cfg["methods"]
    if len(methods) != 2:
        raise ValidationError("compare needs exactly two methods")
    a, b = methods
    rows, _ = _metric_rows(cfg, list(dict.fromkeys(methods)))
    by = {(r["sample_id"], r["method"]): r for r in rows}
    deltas = []
    for sid in dict.fromkeys(r["sample_id"] for r in rows):
        ra, rb = by[sid, a], by[sid, b]
        deltas.append({"sample_id": sid, "method_a": a, "method_b": b,
                       **{f"delta_{k}": ra[k] - rb[k] for k in ("psnr_db", "nmse", "ssim")}})
    name = cfg["name"]
    files = _csv_files(f"{name}_compare.csv", deltas, COMPARE_FIELDS, cfg)
    means = {f"mean_delta_{k}": float(np.mean([d[f"delta_{k}"] for d in deltas]))
             for k in ("psnr_db", "nmse", "ssim")}
    return files, dict(means, rows=len(deltas))


def build_make_dataset(cfg: dict):
    ds, deg = cfg["dataset"], cfg["degradation"]
    grid = _grid(cfg)
    geometry = _geometry(cfg, grid)
    prov = _provenance(cfg)
    files = {}
    for i in range(ds["count"]):
        seed = ds["first_seed"] + i
        phantom = random_phantom(seed, ds["n_ellipses"], cfg["phantom"]["fov_radius"])
        sino = analytic_sinogram(phantom, geometry, cfg["projection"]["bin_integrated"])
        sino = _degrade(sino, dict(deg, seed=deg["seed"] + i))
        sid = f"sample_{seed:05d}"
        files.update(fio.sinogram_files(f"{sid}.sino.f32", sino, prov))
        files.update(fio.image_files(f"{sid}.ref.f32", rasterize(phantom, grid), prov))
    return files, {"samples": ds["count"]}


def build_matrix_oracle(cfg: dict):
    grid = _grid(cfg)
    geometry = _geometry(cfg, grid)
    mat = build_backprojection_matrix(grid, geometry, "linear")
    rng = np.random.Generator(np.random.PCG64(cfg["oracle"]["seed"]))
    worst = 0.0
    for _ in range(cfg["oracle"]["trials"]):
        samples = rng.standard_normal((geometry.n_bins, geometry.n_views))
        fast = backproject(Sinogram(samples, geometry, "filtered"), grid, "linear")
        dense = (mat @ samples.ravel()).reshape(grid.shape)
        worst = max(worst, float(np.max(np.abs(fast - dense))))
    report = {"max_abs_error": worst, "tolerance": MATRIX_ORACLE_TOL,
              "passed": worst < MATRIX_ORACLE_TOL, "matrix_shape": list(mat.shape),
              "provenance": _provenance(cfg)}
    return {f"{cfg['name']}.json": fio.dumps_json(report)}, report


BUILDERS = {
    "phantom": build_phantom,
    "project": build_project,
    "degrade": build_degrade,
    "filter": build_filter,
    "reconstruct": build_reconstruct,
    "train": build_train,
    "eval": build_eval,
    "compare": build_compare,
    "make-dataset": build_make_dataset,
    "matrix-oracle": build_matrix_oracle,
}


# ---------------------------------------------------------------------------
# defaults per command
# ---------------------------------------------------------------------------

_PHANTOM_DEFAULTS = {"source": "shepp_logan", "seed": 0, "n_ellipses": 5, "fov_radius": 1.0}
_DEG_DEFAULTS = {"dose_fraction": None, "incident_counts": 1e6, "keep_views": None, "seed": 0}
_TRAIN_DEFAULTS = {k: v for k, v in TrainConfig().to_dict().items()
                   if k not in ("basis_family", "k", "filter_kind")}
_TRAIN_DEFAULTS["stop_after"] = None


def _apply_defaults(cmd: str, cfg: dict) -> dict:
    d = {"name": {"phantom": "phantom", "project": "sinogram", "degrade": "degraded",
                  "filter": "filtered", "reconstruct": "recon", "train": "model",
                  "eval": "eval", "compare": "compare", "make-dataset": "dataset",
                  "matrix-oracle": "matrix_oracle"}[cmd]}
    if cmd in ("phantom", "project", "make-dataset"):
        d["phantom"] = dict(_PHANTOM_DEFAULTS)
    if cmd in ("project", "make-dataset"):
        d["projection"] = {"mode": "analytic", "bin_integrated": False}
        d["geometry"] = {"n_views": 180}
    if cmd in ("degrade", "make-dataset"):
        d["degradation"] = dict(_DEG_DEFAULTS)
    if cmd in ("filter", "reconstruct", "train", "eval", "compare"):
        d["filter"] = "ramp"
    if cmd == "reconstruct":
        d["method"] = "li_fbp"
    if cmd == "train":
        d.update(basis="linear", k=2, training=dict(_TRAIN_DEFAULTS))
    if cmd in ("eval", "compare"):
        d["methods"] = ["ne_fbp", "li_fbp"]
        d["error_maps"] = False
    if cmd == "make-dataset":
        d["dataset"] = {"count": 8, "first_seed": 0, "n_ellipses": 6}
    if cmd == "matrix-oracle":
        d["grid"] = {"height": 8, "width": 8, "pixel_size": 1.0}
        d["geometry"] = {"n_bins": 11, "n_views": 12, "bin_width_mm": 1.0}
        d["oracle"] = {"trials": 20, "seed": 0}
    cfg = _merge(d, cfg)
    if cmd in ("phantom", "project"):
        _square_grid_defaults(cfg, 128)
    if cmd == "make-dataset":
        _square_grid_defaults(cfg, 64)
    if "geometry" in cfg and cmd in ("project", "make-dataset", "matrix-oracle"):
        _geometry(cfg, _grid(cfg))
    return cfg


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


S = argparse.SUPPRESS


def _out_args(p, config=True):
    p.add_argument("--out", dest="output", default=S, help="existing output directory")
    p.add_argument("--name", dest="name", default=S, help="base name of the output files")
    if config:
        p.add_argument("--config", dest="_config", default=None, help="JSON experiment config")


def _grid_args(p):
    p.add_argument("--size", type=int, dest="_size", default=S, help="square image side")
    p.add_argument("--pixel-size", type=float, dest="grid.pixel_size", default=S)


def _geometry_args(p):
    p.add_argument("--views", type=int, dest="geometry.n_views", default=S)
    p.add_argument("--bins", type=int, dest="geometry.n_bins", default=S)
    p.add_argument("--bin-width", type=float, dest="geometry.bin_width_mm", default=S)
    p.add_argument("--span", type=float, dest="geometry.angle_span_rad", default=S)


def _phantom_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--shepp-logan", dest="phantom.source", action="store_const",
                     const="shepp_logan", default=S)
    src.add_argument("--random", dest="phantom.source", action="store_const", const="random",
                     default=S)
    src.add_argument("--from", dest="_phantom_file", default=S, help="PhantomSpec JSON")
    p.add_argument("--seed", type=int, dest="phantom.seed", default=S)
    p.add_argument("--ellipses", type=int, dest="phantom.n_ellipses", default=S)
    p.add_argument("--fov", type=float, dest="phantom.fov_radius", default=S)


def _degrade_args(p, seed_flag="--seed"):
    p.add_argument("--dose", type=float, dest="degradation.dose_fraction", default=S)
    p.add_argument("--incident-counts", type=float, dest="degradation.incident_counts",
                   default=S)
    p.add_argument("--keep-views", type=int, dest="degradation.keep_views", default=S)
    p.add_argument(seed_flag, type=int, dest="degradation.seed", default=S)


def _filter_arg(p):
    p.add_argument("--filter", choices=FILTER_KINDS, dest="filter", default=S)


def _method_list(text):
    items = [s for s in text.replace(",", " ").split() if s]
    bad = [s for s in items if s not in METHODS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {METHODS}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="linfbp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"linfbp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="write a phantom description and its rasterization")
    _phantom_args(p)
    _grid_args(p)
    _out_args(p)

    p = sub.add_parser("project", help="simulate a sinogram from a phantom")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--analytic", dest="projection.mode", action="store_const",
                      const="analytic", default=S)
    mode.add_argument("--pixel-driven", dest="projection.mode", action="store_const",
                      const="pixel_driven", default=S)
    p.add_argument("--bin-integrated", dest="projection.bin_integrated", action="store_true",
                   default=S)
    p.add_argument("--phantom", dest="inputs.phantom", default=S, help="PhantomSpec JSON")
    _phantom_args(p)
    _geometry_args(p)
    _grid_args(p)
    _out_args(p)

    p = sub.add_parser("degrade", help="view subsampling and/or low-dose noise")
    p.add_argument("--sinogram", dest="inputs.sinogram", default=S)
    _degrade_args(p)
    _out_args(p)

    p = sub.add_parser("filter", help="apply a reconstruction filter to a sinogram")
    p.add_argument("--sinogram", dest="inputs.sinogram", default=S)
    _filter_arg(p)
    _out_args(p)

    p = sub.add_parser("reconstruct", help="reconstruct an image with one method")
    p.add_argument("--sinogram", dest="inputs.sinogram", default=S)
    p.add_argument("--method", choices=METHODS, dest="method", default=S)
    p.add_argument("--checkpoint", dest="inputs.checkpoint", default=S)
    p.add_argument("--reference", dest="inputs.reference", default=S)
    _filter_arg(p)
    _grid_args(p)
    _out_args(p)

    p = sub.add_parser("train", help="train the coefficient network")
    p.add_argument("--data", dest="inputs.data", default=S, help="directory of sample pairs")
    p.add_argument("--resume", dest="inputs.resume", default=S, help="checkpoint to resume")
    p.add_argument("--basis", choices=BASIS_FAMILIES, dest="basis", default=S)
    p.add_argument("--k", type=int, dest="k", default=S)
    p.add_argument("--epochs", type=int, dest="training.epochs", default=S)
    p.add_argument("--stop-after", type=int, dest="training.stop_after", default=S)
    p.add_argument("--lr", type=float, dest="training.lr", default=S)
    p.add_argument("--seed", type=int, dest="training.seed", default=S)
    p.add_argument("--gdl-weight", type=float, dest="training.gdl_weight", default=S)
    p.add_argument("--rho", type=float, dest="training.rho", default=S)
    p.add_argument("--momentum", type=float, dest="training.momentum", default=S)
    p.add_argument("--init", choices=("fan_in", "linear"), dest="training.init", default=S)
    p.add_argument("--init-noise", type=float, dest="training.init_noise", default=S)
    p.add_argument("--hidden", type=int, dest="training.hidden", default=S)
    p.add_argument("--ensemble", action="store_true", dest="training.ensemble", default=S)
    p.add_argument("--no-shuffle", action="store_false", dest="training.shuffle", default=S)
    _filter_arg(p)
    _out_args(p)

    for name, help_text in (("eval", "metrics of several methods over a dataset"),
                            ("compare", "per-sample metric differences of two methods")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", dest="inputs.data", default=S)
        p.add_argument("--methods", type=_method_list, dest="methods", default=S)
        p.add_argument("--checkpoint", action="append", dest="_checkpoints", default=S,
                       help="PATH or METHOD=PATH; repeatable")
        p.add_argument("--error-maps", action="store_true", dest="error_maps", default=S)
        _filter_arg(p)
        _out_args(p)

    p = sub.add_parser("make-dataset", help="random phantoms with sinograms and references")
    p.add_argument("--count", type=int, dest="dataset.count", default=S)
    p.add_argument("--first-seed", type=int, dest="dataset.first_seed", default=S)
    p.add_argument("--ellipses", type=int, dest="dataset.n_ellipses", default=S)
    p.add_argument("--bin-integrated", dest="projection.bin_integrated", action="store_true",
                   default=S)
    _degrade_args(p, seed_flag="--noise-seed")
    _geometry_args(p)
    _grid_args(p)
    _out_args(p)

    p = sub.add_parser("matrix-oracle", help="check backprojection against its dense matrix")
    p.add_argument("--trials", type=int, dest="oracle.trials", default=S)
    p.add_argument("--seed", type=int, dest="oracle.seed", default=S)
    _geometry_args(p)
    _grid_args(p)
    _out_args(p)

    p = sub.add_parser("verify", help="rebuild an artifact from its provenance and compare")
    p.add_argument("paths", nargs="+")
    for sp in sub.choices.values():
        for action in sp._actions:
            if action.option_strings and action.metavar is None and action.nargs is None:
                action.metavar = action.option_strings[-1].lstrip("-").upper().replace("-", "_")
    return parser


def effective_config(args: argparse.Namespace) -> dict:
    """Config file (validated), then flags, then command defaults; validated again."""
    cmd = args.command
    ns = vars(args)
    cfg = {}
    if ns.get("_config"):
        try:
            cfg = fio.read_json(ns["_config"])
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {ns['_config']}: {exc}") from exc
        validate_config(cfg)
        cfg.pop("command", None)
    for key, value in ns.items():
        if key.startswith("_") or key in ("command", "paths"):
            continue
        _set_path(cfg, key, value)
    if "_size" in ns:
        _set_path(cfg, "grid.height", ns["_size"])
        _set_path(cfg, "grid.width", ns["_size"])
    if "_phantom_file" in ns:
        _set_path(cfg, "phantom.source", "file")
        _set_path(cfg, "phantom.path", ns["_phantom_file"])
    for item in ns.get("_checkpoints") or []:
        method, sep, path = item.partition("=")
        if sep and method in METHODS:
            _set_path(cfg, f"inputs.checkpoints.{method}", path)
        else:
            _set_path(cfg, "inputs.checkpoint", item)
    cfg["command"] = cmd
    for key, value in list(cfg.get("inputs", {}).items()):
        if isinstance(value, str):
            cfg["inputs"][key] = _abspath(value)
        elif isinstance(value, dict):
            cfg["inputs"][key] = {m: _abspath(v) for m, v in value.items()}
    if cfg.get("phantom", {}).get("path"):
        cfg["phantom"]["path"] = _abspath(cfg["phantom"]["path"])
    if "output" in cfg:
        cfg["output"] = _abspath(cfg["output"])
    validate_config(cfg)
    cfg = _apply_defaults(cmd, cfg)
    validate_config(cfg)
    _require_inputs(cmd, cfg)
    return cfg


_REQUIRED_INPUTS = {"degrade": "sinogram", "filter": "sinogram", "reconstruct": "sinogram",
                    "train": "data", "eval": "data", "compare": "data"}


def _require_inputs(cmd: str, cfg: dict) -> None:
    key = _REQUIRED_INPUTS.get(cmd)
    if key and not cfg.get("inputs", {}).get(key):
        raise UsageError(f"linfbp {cmd}: --{key} is required")
    if "output" not in cfg:
        raise UsageError(f"linfbp {cmd}: --out is required")


def run(cfg: dict, progress=None):
    """Build all files of one command and write them (plus the effective config)."""
    out = Path(cfg["output"])
    if not out.is_dir():
        raise ValidationError(f"output directory {out} does not exist")
    builder = BUILDERS[cfg["command"]]
    files, report = builder(cfg, progress) if cfg["command"] == "train" else builder(cfg)
    files[f"{cfg['name']}.config.json"] = fio.dumps_json(cfg)
    fio.write_files(out, files)
    return files, report


def verify(paths) -> list:
    """``[(path, ok, message)]`` after rebuilding each artifact from its provenance."""
    results = []
    for raw in paths:
        path = Path(raw)
        if not path.exists():
            results.append((raw, False, "missing"))
            continue
        prov = _read_provenance(path)
        if not prov or prov.get("command") not in BUILDERS:
            results.append((raw, False, "no provenance"))
            continue
        files, _ = BUILDERS[prov["command"]](copy.deepcopy(prov["config"]))
        rebuilt = files.get(path.name)
        if rebuilt is None:
            results.append((raw, False, "artifact not produced by its recorded command"))
        elif rebuilt != path.read_bytes():
            results.append((raw, False, "bytes differ"))
        else:
            results.append((raw, True, "identical"))
    return results


def _print_report(cmd: str, cfg: dict, files: dict, report: dict) -> None:
    if cmd in ("eval", "compare") and "summary" in report:
        print(f"{'method':<10} {'n':>3} {'PSNR dB':>17} {'NMSE':>19} {'SSIM':>17}")
        for s in report["summary"]:
            print(f"{s['method']:<10} {s['n']:>3} "
                  f"{s['psnr_db_mean']:8.3f} ± {s['psnr_db_std']:<6.3f} "
                  f"{s['nmse_mean']:9.5f} ± {s['nmse_std']:<7.5f} "
                  f"{s['ssim_mean']:7.4f} ± {s['ssim_std']:<6.4f}")
    else:
        print(json.dumps({k: v for k, v in report.items() if k != "provenance"}, sort_keys=True))
    for name in files:
        print(f"wrote {Path(cfg['output']) / name}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "verify":
            results = verify(args.paths)
            for path, ok, msg in results:
                print(f"{'OK  ' if ok else 'FAIL'} {path}: {msg}")
            return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VALIDATION
        cfg = effective_config(args)
        progress = None
        if args.command == "train":
            def progress(epoch, loss):
                print(f"epoch {epoch:4d}  mean loss {loss:.6g}", file=sys.stderr)
        files, report = run(cfg, progress)
        _print_report(args.command, cfg, files, report)
        if args.command == "matrix-oracle" and not report["passed"]:
            return EXIT_NUMERIC
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ValueError, KeyError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
