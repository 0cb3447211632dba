"""Field snapshots (legacy ASCII VTK), diagnostics CSV and checkpoints."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh
from .spaces import Field, Quadrature


def cell_means(field: Field, component: int = 0) -> np.ndarray:
    """Cell averages of one component, shape ``(nx, nz)``."""
    comp = field.space.components[component]
    quad = Quadrature(max(comp.Px, comp.Pz) + 1)
    vals = comp.evaluate(field.component(component), quad.points, quad.points)
    return np.einsum("ikxz,xz->ik", vals, quad.weights2d)


def write_vtk(path, mesh: Mesh, cell_data: dict[str, np.ndarray], title: str = "moistfem") -> Path:
    """Structured grid on the mesh vertices with per-cell data.

    Values of shape ``(nx, nz)`` are written as scalars and ``(nx, nz, 2)``
    as vectors (with a zero third component).
    """
    path = Path(path)
    nx, nz = mesh.nx, mesh.nz
    xs = np.linspace(0.0, mesh.Lx, nx + 1)
    zs = np.linspace(0.0, mesh.H, nz + 1)
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {nx + 1} {nz + 1} 1",
        f"POINTS {(nx + 1) * (nz + 1)} double",
    ]
    # VTK orders points with x fastest
    for z in zs:
        lines.extend(f"{x:.10g} {z:.10g} 0" for x in xs)
    lines.append(f"CELL_DATA {nx * nz}")
    for name, values in cell_data.items():
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.12g}" for v in values.T.ravel())
        else:
            lines.append(f"VECTORS {name} double")
            flat = values.transpose(1, 0, 2).reshape(-1, 2)
            lines.extend(f"{a:.12g} {b:.12g} 0" for a, b in flat)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_cell_scalars(path) -> dict[str, np.ndarray]:
    """Scalar cell data of a file written by :func:`write_vtk`, as ``(nx, nz)``."""
    tokens = Path(path).read_text().split("\n")
    dims = next(line for line in tokens if line.startswith("DIMENSIONS")).split()
    nx, nz = int(dims[1]) - 1, int(dims[2]) - 1
    out = {}
    for n, line in enumerate(tokens):
        if line.startswith("SCALARS"):
            name = line.split()[1]
            vals = np.array([float(t) for t in tokens[n + 2 : n + 2 + nx * nz]])
            out[name] = vals.reshape(nz, nx).T
    return out


class DiagnosticsWriter:
    """Appends one row per call; the header comes from the first row."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self.columns: list[str] | None = None
        self._append = append and self.path.exists()
        if self._append:
            with self.path.open(newline="") as fh:
                self.columns = next(csv.reader(fh), None)

    def write(self, row: dict) -> None:
        if self.columns is None:
            self.columns = list(row)
            with self.path.open("w", newline="") as fh:
                csv.writer(fh).writerow(self.columns)
        with self.path.open("a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(row[c]) for c in self.columns])


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def read_diagnostics(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def truncate_diagnostics(path, step: int) -> None:
    """Drop rows after ``step`` (used when a run restarts from a checkpoint)."""
    path = Path(path)
    if not path.exists():
        return
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return
    col = rows[0].index("step")
    keep = [rows[0]] + [r for r in rows[1:] if int(r[col]) <= step]
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(keep)


def save_checkpoint(path, step: int, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    payload = {f"field_{k}": np.asarray(v) for k, v in arrays.items()}
    payload.update({f"meta_{k}": np.asarray(v) for k, v in meta.items()})
    payload["step"] = np.asarray(step)
    with path.open("wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path) -> tuple[int, dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k[6:]: data[k].copy() for k in data.files if k.startswith("field_")}
        meta = {k[5:]: data[k][()] if data[k].ndim == 0 else data[k].copy()
                for k in data.files if k.startswith("meta_")}
        step = int(data["step"])
    return step, arrays, meta
