"""Training/test datasets, collocation sets and the CSV format they are stored in.

CSV layout::

    # source_grid=257
    # re=100
    ...
    x,y,re,u,v,p
    0,0,100,0,0,-0.0123...

Provenance lines come first, prefixed with ``#`` and written as ``key=value``.
Values use 17 significant digits so a write/read round trip is lossless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from cavity_pinn.cavity_solver import FlowField, sample_to_grid
from cavity_pinn.physics import LidProfile, boundary_target

COLUMNS = ("x", "y", "re", "u", "v", "p")


class DatasetError(ValueError):
    pass


class CsvParseError(DatasetError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True)
class FieldSample:
    x: float
    y: float
    re: float
    u: float
    v: float
    p: float


@dataclass
class Dataset:
    """Samples as an (n, 6) array with columns ``x, y, re, u, v, p``."""

    data: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).reshape(-1, len(COLUMNS))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> list[FieldSample]:
        return [FieldSample(*map(float, row)) for row in self.data]

    @classmethod
    def from_samples(cls, samples: Iterable[FieldSample], provenance=None) -> "Dataset":
        rows = [(s.x, s.y, s.re, s.u, s.v, s.p) for s in samples]
        return cls(np.array(rows, dtype=np.float64).reshape(-1, 6), dict(provenance or {}))

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COLUMNS.index(name)]

    @property
    def re_values(self) -> list[float]:
        """Distinct Reynolds numbers in order of first appearance."""
        seen = []
        for r in self.data[:, 2]:
            if r not in seen:
                seen.append(float(r))
        return seen

    def select_re(self, re_list: Sequence[float]) -> "Dataset":
        mask = np.isin(self.data[:, 2], np.asarray(re_list, dtype=float))
        return Dataset(self.data[mask].copy(), dict(self.provenance))

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            return Dataset(np.empty((0, 6)))
        prov = dict(parts[0].provenance)
        return Dataset(np.concatenate([p.data for p in parts]), prov)


def _fmt_list(values) -> str:
    return ",".join(f"{float(v):g}" for v in values)


def field_to_dataset(field_: FlowField) -> Dataset:
    x, y = field_.mesh()
    n = field_.n
    data = np.column_stack(
        [x.ravel(), y.ravel(), np.full(n * n, field_.re), field_.u.ravel(), field_.v.ravel(), field_.p.ravel()]
    )
    return Dataset(data, {"grid": n, "re": _fmt_list([field_.re]), "lid": field_.lid.value})


def dataset_to_field(ds: Dataset) -> FlowField:
    """Inverse of :func:`field_to_dataset` for a single-Re full-grid dataset."""
    n = int(round(math.sqrt(len(ds))))
    if n * n != len(ds) or len(ds.re_values) != 1:
        raise DatasetError("dataset is not a single full square grid")
    order = np.lexsort((ds.column("x"), ds.column("y")))
    d = ds.data[order]
    lid = LidProfile.parse(ds.provenance.get("lid", "regularized"))
    return FlowField(
        n=n,
        u=d[:, 3].reshape(n, n),
        v=d[:, 4].reshape(n, n),
        p=d[:, 5].reshape(n, n),
        re=float(d[0, 2]),
        lid=lid,
    )


def make_training_set(fields: Sequence[tuple[float, FlowField]], m: int) -> Dataset:
    """Every node of an m x m grid (walls included) for each Reynolds number."""
    parts = []
    for re, f in fields:
        g = sample_to_grid(f, m)
        g.re = float(re)
        parts.append(field_to_dataset(g).data)
    data = np.concatenate(parts) if parts else np.empty((0, 6))
    prov = {
        "source_grid": _fmt_list(sorted({f.n for _, f in fields})),
        "grid": m,
        "re": _fmt_list([re for re, _ in fields]),
        "lid": fields[0][1].lid.value if fields else "",
        "noise": 0,
        "subsample": 1,
    }
    return Dataset(data, prov)


def _group_indices(ds: Dataset) -> list[np.ndarray]:
    re = ds.data[:, 2]
    return [np.flatnonzero(re == r) for r in ds.re_values]


def subsample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform selection without replacement of ceil(fraction * n) samples per Re."""
    if not 0 < fraction <= 1:
        raise DatasetError(f"sub-sample fraction must be in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    keep = []
    for idx in _group_indices(ds):
        k = math.ceil(round(fraction * idx.size, 9))
        keep.append(np.sort(rng.choice(idx, size=k, replace=False)))
    sel = np.concatenate(keep) if keep else np.empty(0, dtype=int)
    prov = dict(ds.provenance)
    prov.update(subsample=f"{fraction:g}", subsample_seed=seed)
    return Dataset(ds.data[sel].copy(), prov)


def add_noise(ds: Dataset, amplitude: float, seed: int) -> Dataset:
    """Add independent uniform noise on [-amplitude, amplitude] to u, v and p."""
    if amplitude < 0:
        raise DatasetError(f"noise amplitude must be >= 0, got {amplitude}")
    data = ds.data.copy()
    if amplitude > 0:
        rng = np.random.default_rng(seed)
        data[:, 3:6] += rng.uniform(-amplitude, amplitude, size=(len(ds), 3))
    prov = dict(ds.provenance)
    prov.update(noise=f"{amplitude:g}", noise_kind="uniform", noise_seed=seed)
    return Dataset(data, prov)


@dataclass
class CollocationSet:
    """Residual evaluation sites.

    ``interior`` is (n, 3): x, y, re.  ``boundary`` is (m, 5): x, y, re and the
    prescribed wall velocities u, v.
    """

    interior: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=np.float64).reshape(-1, 3)
        self.boundary = np.asarray(self.boundary, dtype=np.float64).reshape(-1, 5)

    @staticmethod
    def concat(parts: Sequence["CollocationSet"]) -> "CollocationSet":
        return CollocationSet(
            np.concatenate([p.interior for p in parts]) if parts else np.empty((0, 3)),
            np.concatenate([p.boundary for p in parts]) if parts else np.empty((0, 5)),
        )


def boundary_points(m: int) -> np.ndarray:
    """m equally spaced points per edge of the unit square, corners listed once."""
    t = np.linspace(0.0, 1.0, m)
    inner = t[1:-1]
    pts = [
        np.column_stack([t, np.zeros(m)]),
        np.column_stack([t, np.ones(m)]),
        np.column_stack([np.zeros(m - 2), inner]),
        np.column_stack([np.ones(m - 2), inner]),
    ]
    return np.concatenate(pts)


def make_collocation_set(re_list: Sequence[float], interior_m: int, boundary_m: int, lid) -> CollocationSet:
    if interior_m < 2 or boundary_m < 2:
        raise DatasetError("interior_m and boundary_m must be >= 2")
    lid = LidProfile.parse(lid)
    t = np.linspace(0.0, 1.0, interior_m)[1:-1]
    gx, gy = np.meshgrid(t, t, indexing="xy")
    gx, gy = gx.ravel(), gy.ravel()
    bp = boundary_points(boundary_m)
    targets = np.array([boundary_target(x, y, lid) for x, y in bp]).reshape(-1, 2)
    interior, boundary = [], []
    for re in re_list:
        interior.append(np.column_stack([gx, gy, np.full(gx.size, float(re))]))
        boundary.append(np.column_stack([bp, np.full(len(bp), float(re)), targets]))
    return CollocationSet(
        np.concatenate(interior) if interior else np.empty((0, 3)),
        np.concatenate(boundary) if boundary else np.empty((0, 5)),
    )


# -- CSV ---------------------------------------------------------------------------

def _write_table(path, header: Sequence[str], rows: np.ndarray, provenance: dict) -> None:
    lines = [f"# {k}={v}" for k, v in provenance.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format(float(v), ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_table(path, header: Sequence[str]) -> tuple[np.ndarray, dict]:
    provenance: dict = {}
    rows = []
    seen_header = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if not seen_header:
                    key, _, value = line[1:].strip().partition("=")
                    provenance[key.strip()] = value.strip()
                continue
            if not seen_header:
                cols = [c.strip() for c in line.split(",")]
                missing = [c for c in header if c not in cols]
                if missing:
                    raise CsvParseError(path, lineno, f"missing column(s): {', '.join(missing)}")
                if cols != list(header):
                    raise CsvParseError(path, lineno, f"expected header {','.join(header)}, got {line}")
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise CsvParseError(path, lineno, f"expected {len(header)} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise CsvParseError(path, lineno, str(exc)) from None
    if not seen_header:
        raise CsvParseError(path, 0, "no header line")
    return np.array(rows, dtype=np.float64).reshape(-1, len(header)), provenance


def write_csv(path, ds: Dataset) -> None:
    _write_table(path, COLUMNS, ds.data, ds.provenance)


def read_csv(path) -> Dataset:
    data, prov = _read_table(path, COLUMNS)
    return Dataset(data, prov)


INTERIOR_COLUMNS = ("x", "y", "re")
BOUNDARY_COLUMNS = ("x", "y", "re", "u", "v")


def write_collocation(prefix, colloc: CollocationSet, provenance=None) -> tuple[Path, Path]:
    prefix = Path(prefix)
    pi = prefix.with_name(prefix.name + "_interior.csv")
    pb = prefix.with_name(prefix.name + "_boundary.csv")
    _write_table(pi, INTERIOR_COLUMNS, colloc.interior, dict(provenance or {}))
    _write_table(pb, BOUNDARY_COLUMNS, colloc.boundary, dict(provenance or {}))
    return pi, pb


def read_collocation(prefix) -> CollocationSet:
    prefix = Path(prefix)
    interior, _ = _read_table(prefix.with_name(prefix.name + "_interior.csv"), INTERIOR_COLUMNS)
    boundary, _ = _read_table(prefix.with_name(prefix.name + "_boundary.csv"), BOUNDARY_COLUMNS)
    return CollocationSet(interior, boundary)
