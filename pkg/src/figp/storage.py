"""File formats: training data, fitted models, CSV exports.

All writes are atomic (temp file then rename) and all numeric output
is formatted deterministically, so repeated runs with the same seed
produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from typing import Optional, Sequence

import numpy as np

from .designs import DecayCurve
from .domain import (
    Domain,
    FunctionalInput,
    QuadratureGrid,
    build_grid,
    sample_function,
)
from .emulator import FieldDataset, PCAEmulator
from .errors import FigpError
from .gp import GPModel, build_model
from .kernels import LINEAR, NONLINEAR, KernelSpec, MaternParams
from .sampling import PathFamily

MODEL_FORMAT = "figp-model"
EMULATOR_FORMAT = "figp-emulator"
FORMAT_VERSION = 1


def fmt(v: float) -> str:
    """Deterministic shortest-round-trip float formatting."""
    return f"{float(v):.17g}"


def fmt6(v: float) -> str:
    """Report formatting: 6 significant digits (JSON keeps full precision)."""
    return f"{float(v):.6g}"


def atomic_write_text(path: str, text: str):
    """Write text to `path` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# grids and training data

def grid_to_dict(grid: QuadratureGrid) -> dict:
    return {
        "domain": [list(b) for b in grid.domain.bounds],
        "resolution": grid.resolution,
        "rule": grid.rule,
    }


def grid_from_dict(d: dict) -> QuadratureGrid:
    domain = Domain(tuple(tuple(b) for b in d["domain"]))
    return build_grid(domain, d.get("resolution"), d.get("rule", "gauss-legendre"))


def input_from_reference(ref, grid: QuadratureGrid) -> FunctionalInput:
    """Resolve a serialized input: an expression string, or a mapping
    {"csv": path} pointing at a coordinate/value table."""
    if isinstance(ref, str):
        if ref.endswith(".csv"):
            return load_input_csv(ref, grid)
        return sample_function(ref, grid)
    if isinstance(ref, dict) and "csv" in ref:
        return load_input_csv(ref["csv"], grid)
    raise FigpError(f"cannot resolve functional input reference {ref!r}")


def input_to_reference(g: FunctionalInput):
    if g.label is None:
        raise FigpError(
            "only labeled inputs (expression strings or CSV paths) can be "
            "serialized"
        )
    return g.label


def load_training_data(path: str):
    """Load {domain, resolution, rule, inputs, y} training data."""
    d = read_json(path)
    for key in ("domain", "inputs", "y"):
        if key not in d:
            raise FigpError(f"training data {path!r} is missing {key!r}")
    grid = grid_from_dict(d)
    inputs = [input_from_reference(ref, grid) for ref in d["inputs"]]
    y = np.asarray(d["y"], dtype=float)
    if y.size != len(inputs):
        raise FigpError("training data y length does not match inputs")
    return grid, inputs, y


def save_training_data(path: str, grid: QuadratureGrid,
                       inputs: Sequence[FunctionalInput], y) -> None:
    payload = dict(grid_to_dict(grid))
    payload["inputs"] = [input_to_reference(g) for g in inputs]
    payload["y"] = [float(v) for v in np.asarray(y, dtype=float)]
    write_json(path, payload)


def load_input_csv(path: str, grid: QuadratureGrid) -> FunctionalInput:
    """Read a functional input from CSV with d coordinate columns and a
    final value column; rows must match the grid nodes in order."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = grid.domain.dim
    if data.shape[1] != d + 1:
        raise FigpError(
            f"{path!r}: expected {d} coordinate columns plus one value column"
        )
    if data.shape[0] != grid.n_points:
        raise FigpError(
            f"{path!r}: {data.shape[0]} rows but the grid has "
            f"{grid.n_points} nodes"
        )
    if not np.allclose(data[:, :d], grid.nodes, atol=1e-9, rtol=0.0):
        raise FigpError(f"{path!r}: coordinates do not match the grid nodes")
    return FunctionalInput(grid, data[:, d], label=path)


# ---------------------------------------------------------------------------
# kernel specs and models

def kernel_spec_to_dict(spec: KernelSpec) -> dict:
    d = {
        "variant": spec.family,
        "nu": spec.base.nu,
        "sigma2": spec.base.sigma2,
        "nugget": spec.nugget,
        "premap": spec.premap,
    }
    if spec.family == LINEAR:
        d["lengthscales"] = list(spec.base.lengthscales)
    else:
        d["gamma"] = spec.gamma
    return d


def kernel_spec_from_dict(d: dict) -> KernelSpec:
    family = d["variant"]
    if family == LINEAR:
        params = MaternParams(d["nu"], d["sigma2"],
                              tuple(d["lengthscales"]))
        return KernelSpec(LINEAR, params, premap=d.get("premap"),
                          nugget=d.get("nugget"))
    params = MaternParams(d["nu"], d["sigma2"])
    return KernelSpec(NONLINEAR, params, gamma=d["gamma"],
                      nugget=d.get("nugget"))


def gram_checksum(model: GPModel) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(model.factorization.gram).tobytes()
    ).hexdigest()


def model_to_dict(model: GPModel) -> dict:
    grid = model.inputs[0].grid
    return {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "kernel": kernel_spec_to_dict(model.spec),
        "mu_hat": model.mu_hat,
        "log_likelihood": model.log_likelihood,
        "grid": grid_to_dict(grid),
        "inputs": [input_to_reference(g) for g in model.inputs],
        "y": [float(v) for v in model.y],
        "gram_sha256": gram_checksum(model),
    }


def save_model(path: str, model: GPModel) -> None:
    write_json(path, model_to_dict(model))


def model_from_dict(d: dict, verify_checksum: bool = True) -> GPModel:
    if d.get("format") != MODEL_FORMAT:
        raise FigpError("not a model file")
    spec = kernel_spec_from_dict(d["kernel"])
    grid = grid_from_dict(d["grid"])
    inputs = [input_from_reference(ref, grid) for ref in d["inputs"]]
    y = np.asarray(d["y"], dtype=float)
    model = build_model(spec, inputs, y, mu=d["mu_hat"])
    model = GPModel(model.spec, model.inputs, model.y, model.mu_hat,
                    model.factorization, model.alpha,
                    log_likelihood=float(d.get("log_likelihood", "nan")))
    if verify_checksum and "gram_sha256" in d:
        found = gram_checksum(model)
        if found != d["gram_sha256"]:
            raise FigpError(
                "rebuilt Gram checksum mismatch; the model file does not "
                "match this environment's arithmetic"
            )
    return model


def load_model(path: str, verify_checksum: bool = True) -> GPModel:
    return model_from_dict(read_json(path), verify_checksum)


# ---------------------------------------------------------------------------
# emulators

def emulator_to_dict(emulator: PCAEmulator) -> dict:
    return {
        "format": EMULATOR_FORMAT,
        "version": FORMAT_VERSION,
        "field_shape": list(emulator.field_shape),
        "mean_field": [float(v) for v in emulator.mean_field],
        "components": [[float(v) for v in row] for row in emulator.components],
        "explained_variance_ratio": [
            float(v) for v in emulator.explained_variance_ratio
        ],
        "score_models": [model_to_dict(m) for m in emulator.score_models],
    }


def save_emulator(path: str, emulator: PCAEmulator) -> None:
    write_json(path, emulator_to_dict(emulator))


def load_emulator(path: str, verify_checksum: bool = True) -> PCAEmulator:
    d = read_json(path)
    if d.get("format") != EMULATOR_FORMAT:
        raise FigpError("not an emulator file")
    models = tuple(
        model_from_dict(md, verify_checksum) for md in d["score_models"]
    )
    return PCAEmulator(
        np.asarray(d["mean_field"], dtype=float),
        np.asarray(d["components"], dtype=float),
        models,
        np.asarray(d["explained_variance_ratio"], dtype=float),
        tuple(d["field_shape"]),
    )


# ---------------------------------------------------------------------------
# field datasets

def load_field_dataset(fields_csv: str, manifest_path: str) -> FieldDataset:
    """Load a field dataset from a CSV (label, v1..vp per row) plus a
    manifest carrying the grid definition and field shape."""
    manifest = read_json(manifest_path)
    grid = grid_from_dict(manifest)
    field_shape = tuple(manifest["field_shape"])
    inputs, rows = [], []
    with open(fields_csv, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FigpError(f"{fields_csv!r} is empty")
        for row in reader:
            if not row:
                continue
            inputs.append(input_from_reference(row[0], grid))
            rows.append([float(v) for v in row[1:]])
    if not inputs:
        raise FigpError(f"{fields_csv!r} has no data rows")
    return FieldDataset(tuple(inputs), np.asarray(rows), field_shape)


def save_field_dataset(fields_csv: str, manifest_path: str,
                       dataset: FieldDataset,
                       grid: Optional[QuadratureGrid] = None) -> None:
    grid = grid or dataset.inputs[0].grid
    manifest = dict(grid_to_dict(grid))
    manifest["field_shape"] = list(dataset.field_shape)
    write_json(manifest_path, manifest)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["input"] + [f"v{j + 1}" for j in range(dataset.p)])
    for g, row in zip(dataset.inputs, dataset.fields):
        writer.writerow([input_to_reference(g)] + [fmt(v) for v in row])
    atomic_write_text(fields_csv, buf.getvalue())


# ---------------------------------------------------------------------------
# CSV exports

def path_family_csv(family: PathFamily) -> str:
    buf = io.StringIO()
    header = " ".join(f"{k}={v}" for k, v in sorted(family.params.items()))
    buf.write(f"# {header}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha"] + [f"path{i + 1}" for i in range(family.n_paths)])
    for j, a in enumerate(family.index_values):
        writer.writerow([fmt6(a)] + [fmt6(v) for v in family.draws[:, j]])
    return buf.getvalue()


def save_path_family(path: str, family: PathFamily) -> None:
    atomic_write_text(path, path_family_csv(family))


def decay_curve_csv(curve: DecayCurve) -> str:
    buf = io.StringIO()
    rate = "" if curve.theoretical_rate is None else fmt6(curve.theoretical_rate)
    buf.write(
        f"# slope={fmt6(curve.slope)} slope_se={fmt6(curve.slope_se)} "
        f"theoretical_rate={rate} method={curve.method}\n"
    )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "mspe", "se"])
    for n, m, s in zip(curve.sizes, curve.mspe, curve.se):
        writer.writerow([int(n), fmt6(m), fmt6(s)])
    return buf.getvalue()


def save_decay_curve(path: str, curve: DecayCurve) -> None:
    atomic_write_text(path, decay_curve_csv(curve))
