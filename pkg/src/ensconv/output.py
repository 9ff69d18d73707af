"""CSV tables, legacy-VTK field snapshots and run manifests."""

from __future__ import annotations

import csv
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

from .assembly import DofLayout

# VTK_QUADRATIC_TRIANGLE: three vertices, then the midpoints of edges 01, 12, 20
_VTK_QUAD_TRI = 22
_VTK_ORDER = [0, 1, 2, 5, 3, 4]


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """Write dict rows with a header; floats use ``repr`` so they round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_vtk(path, layout: DofLayout, point_data: dict, title: str = "ensconv") -> Path:
    """Legacy ASCII unstructured grid with quadratic triangles.

    ``point_data`` maps names to P2 nodal arrays; arrays of shape ``(2 * n_nodes,)``
    are written as vectors.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = layout.n_nodes
    cells = layout.cell_nodes[:, _VTK_ORDER]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in layout.nodes]
    lines.append(f"CELLS {len(cells)} {7 * len(cells)}")
    lines += ["6 " + " ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(_VTK_QUAD_TRI)] * len(cells)
    lines.append(f"CELL_DATA {len(cells)}")
    lines += ["SCALARS region int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r)) for r in layout.mesh.region]
    lines.append(f"POINT_DATA {n}")
    for name, arr in point_data.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape == (2 * n,):
            v = arr.reshape(2, n).T
            lines.append(f"VECTORS {name} double")
            lines += [f"{a!r} {b!r} 0.0" for a, b in v]
        elif arr.shape == (n,):
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(a)) for a in arr]
        else:
            raise ValueError(f"field {name!r} has shape {arr.shape}; expected ({n},) or ({2 * n},)")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_manifest(path, config, extra: dict | None = None) -> Path:
    """Full configuration plus version information, in the same ``key = value`` form the CLI reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    import numpy
    import scipy
    header = [
        f"# ensconv {package_version()}",
        f"# python {platform.python_version()}, numpy {numpy.__version__}, scipy {scipy.__version__}",
    ]
    body = config.to_text()
    tail = []
    for k, v in (extra or {}).items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = ", ".join(repr(float(x)) for x in np.ravel(v))
        tail.append(f"# {k} = {v}")
    path.write_text("\n".join(header) + "\n" + body + ("\n".join(tail) + "\n" if tail else ""))
    return path
