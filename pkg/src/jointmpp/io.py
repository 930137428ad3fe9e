"""File formats: pixel/landslide/adjacency CSVs, run configuration and result tables.

Input schemas
-------------
pixels.csv
    ``id, x, y, su_id`` plus optional ``exposure`` and ``count`` columns and
    any covariate columns named in the run configuration.  Without a
    ``count`` column the pixel counts are the number of landslide records per
    pixel.
landslides.csv
    ``pixel_id`` and exactly one of ``area_m2`` (stored as its square root)
    or ``size_sqrt_m`` (stored verbatim).
adjacency.csv
    ``su_a, su_b``, one undirected edge per row.  A unit without neighbours
    is declared by a row with an empty ``su_b``.
landslide covariates (optional)
    ``su_id`` plus size-only covariate columns, attached to each landslide
    through the slope unit of its pixel.

Numbers are written with ``repr``, the shortest text that parses back to the
same double, so outputs are exact and byte-stable.
"""
from __future__ import annotations

import configparser
import csv
import io as _io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import DomainError
from .graph import PixelGrid, SlopeUnitGraph, build_graph
from .model import CovariateTransform, Dataset, make_projection, standardize

PIXEL_REQUIRED = ("id", "x", "y", "su_id")
PIXEL_OPTIONAL = ("exposure", "count")
SIZE_COLUMNS = ("area_m2", "size_sqrt_m")


class IngestError(DomainError):
    """Input files are missing, malformed or mutually inconsistent."""


# ---------------------------------------------------------------------------
# number formatting and raw tables


def fmt(v) -> str:
    """Shortest round-trip text for numbers; integers stay integers."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_number(text: str, column: str, path) -> float:
    try:
        return float(text)
    except ValueError:
        raise IngestError(f"{path}: non-numeric value {text!r} in column {column!r}") from None


def _parse_int(text: str, column: str, path) -> int:
    try:
        return int(text)
    except ValueError:
        v = _parse_number(text, column, path)
        if not v.is_integer():
            raise IngestError(f"{path}: column {column!r} must hold integers, got {text!r}") from None
        return int(v)


@dataclass
class Table:
    """Column-oriented CSV contents, kept as text so export reproduces the input exactly."""

    columns: list[str]
    rows: list[list[str]]
    path: str = ""

    def col(self, name: str) -> list[str]:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def floats(self, name: str) -> np.ndarray:
        return np.array([_parse_number(t, name, self.path) for t in self.col(name)], dtype=float)

    def ints(self, name: str) -> np.ndarray:
        return np.array([_parse_int(t, name, self.path) for t in self.col(name)], dtype=np.int64)

    def __len__(self):
        return len(self.rows)


def read_table(path) -> Table:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"file not found: {path}")
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError(f"{path}: empty file") from None
    if len(set(header)) != len(header):
        raise IngestError(f"{path}: duplicate column names")
    rows = []
    for k, r in enumerate(reader, start=2):
        if not r:
            continue
        if len(r) != len(header):
            raise IngestError(f"{path}: line {k} has {len(r)} fields, expected {len(header)}")
        rows.append([t.strip() for t in r])
    return Table(header, rows, str(path))


def write_table(path, columns, rows, comments=()):
    """Write a CSV with optional leading ``#`` comment lines (config echo)."""
    buf = _io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def _check_columns(table: Table, required, allowed, what: str):
    missing = [c for c in required if c not in table.columns]
    if missing:
        raise IngestError(f"{what}: missing required column(s) {missing}")
    unknown = [c for c in table.columns if c not in allowed]
    if unknown:
        warnings.warn(f"{what}: ignoring unknown column(s) {unknown}", stacklevel=3)


# ---------------------------------------------------------------------------
# ingestion


@dataclass
class Ingested:
    """Validated inputs plus what is needed to map results back to file ids."""

    dataset: Dataset
    grid: PixelGrid
    graph: SlopeUnitGraph
    su_ids: np.ndarray  # external slope-unit id of internal unit k
    transforms: dict[str, CovariateTransform]
    raw: dict[str, Table] = field(repr=False, default_factory=dict)
    Z2_pixel: np.ndarray | None = None  # size covariates evaluated at every pixel (for maps)

    @property
    def projection(self):
        return make_projection(self.grid.su_index, self.dataset, self.graph.n)


def _adjacency(table: Table):
    """Edges and the set of declared unit ids (isolated units have an empty ``su_b``)."""
    a = table.col("su_a")
    b = table.col("su_b")
    ids, pairs = set(), []
    for k, (x, y) in enumerate(zip(a, b)):
        if x == "":
            raise IngestError(f"{table.path}: row {k + 2} has an empty su_a")
        xi = _parse_int(x, "su_a", table.path)
        ids.add(xi)
        if y != "":
            yi = _parse_int(y, "su_b", table.path)
            ids.add(yi)
            pairs.append((xi, yi))
    return sorted(ids), pairs


def ingest(pixels, landslides, adjacency, count_covariates=(), size_covariates=(), landslide_covariates=None, standardize_covariates: bool = True) -> Ingested:
    """Read and cross-check the input files.

    ``size_covariates`` names columns of pixels.csv (taken at each
    landslide's pixel) or of the landslide covariate file.
    """
    tp = read_table(pixels)
    tl = read_table(landslides)
    ta = read_table(adjacency)
    tc = read_table(landslide_covariates) if landslide_covariates is not None else None
    count_covariates, size_covariates = tuple(count_covariates), tuple(size_covariates)

    # schemas first, before any compute
    lcov_cols = set(tc.columns) - {"su_id"} if tc is not None else set()
    pixel_size_covs = [c for c in size_covariates if c not in lcov_cols]
    _check_columns(tp, PIXEL_REQUIRED + count_covariates + tuple(pixel_size_covs), PIXEL_REQUIRED + PIXEL_OPTIONAL + count_covariates + tuple(pixel_size_covs), "pixels")
    present = [c for c in SIZE_COLUMNS if c in tl.columns]
    if len(present) == 2:
        raise IngestError("landslides: give either area_m2 or size_sqrt_m, not both")
    if not present:
        raise IngestError("landslides: missing size column (area_m2 or size_sqrt_m)")
    _check_columns(tl, ("pixel_id", present[0]), ("pixel_id", present[0]), "landslides")
    _check_columns(ta, ("su_a", "su_b"), ("su_a", "su_b"), "adjacency")
    if tc is not None:
        wanted = tuple(c for c in size_covariates if c in lcov_cols)
        _check_columns(tc, ("su_id",) + wanted, ("su_id",) + wanted, "landslide covariates")

    # slope units
    su_ids, pairs = _adjacency(ta)
    if not su_ids:
        raise IngestError("adjacency: no slope units declared")
    code = {s: k for k, s in enumerate(su_ids)}
    pix_su = tp.ints("su_id")
    unknown = sorted(set(pix_su.tolist()) - code.keys())
    if unknown:
        raise IngestError(f"pixels reference unknown su_id(s) {unknown[:10]}")
    su_index = np.array([code[s] for s in pix_su.tolist()], dtype=np.int64)
    empty = sorted(set(range(len(su_ids))) - set(su_index.tolist()))
    if empty:
        raise IngestError(f"slope unit(s) {[su_ids[k] for k in empty][:10]} contain no pixels")
    graph = build_graph([(code[x], code[y]) for x, y in pairs], n_units=len(su_ids))

    # pixels
    pid = tp.ints("id")
    if len(set(pid.tolist())) != pid.size:
        raise IngestError("pixels: duplicate id")
    row_of = {p: k for k, p in enumerate(pid.tolist())}
    exposure = tp.floats("exposure") if "exposure" in tp.columns else None
    centroids = np.column_stack([tp.floats("x"), tp.floats("y")])
    grid = PixelGrid(su_index=su_index, centroids=centroids, exposure=exposure, ids=pid)

    # landslides
    lp_ext = tl.ints("pixel_id")
    bad = sorted(set(lp_ext.tolist()) - row_of.keys())
    if bad:
        raise IngestError(f"landslides reference unknown pixel id(s) {bad[:10]}")
    lpix = np.array([row_of[p] for p in lp_ext.tolist()], dtype=np.int64)
    raw_size = tl.floats(present[0])
    if np.any(~np.isfinite(raw_size)) or np.any(raw_size <= 0):
        raise IngestError(f"landslides: {present[0]} must be positive")
    sizes = np.sqrt(raw_size) if present[0] == "area_m2" else raw_size
    per_pixel = np.bincount(lpix, minlength=pid.size)
    if "count" in tp.columns:
        counts = tp.ints("count")
        zero = np.flatnonzero((counts == 0) & (per_pixel > 0))
        if zero.size:
            raise IngestError(f"landslide located in pixel {pid[zero[0]]} whose count is 0")
        if np.any(counts != per_pixel):
            k = int(np.flatnonzero(counts != per_pixel)[0])
            raise IngestError(f"pixel {pid[k]}: count {counts[k]} but {per_pixel[k]} landslide record(s)")
    else:
        counts = per_pixel

    # covariates
    Z1 = np.column_stack([tp.floats(c) for c in count_covariates]) if count_covariates else np.zeros((pid.size, 0))
    lunit = su_index[lpix]
    if tc is not None:
        cov_su = tc.ints("su_id")
        if len(set(cov_su.tolist())) != cov_su.size:
            raise IngestError("landslide covariates: duplicate su_id")
        crow = {code.get(s, -1): k for k, s in enumerate(cov_su.tolist())}
        need = sorted(set(lunit.tolist()) - crow.keys()) if lcov_cols & set(size_covariates) else []
        if need:
            raise IngestError(f"landslide covariates missing for su_id(s) {[su_ids[k] for k in need][:10]}")
    z2_cols, z2_pix_cols = [], []
    for c in size_covariates:
        if c in lcov_cols:
            vals = tc.floats(c)
            by_unit = np.full(len(su_ids), np.nan)
            for u, k in crow.items():
                if u >= 0:
                    by_unit[u] = vals[k]
            z2_cols.append(by_unit[lunit])
            z2_pix_cols.append(by_unit[su_index])
        else:
            vals = tp.floats(c)
            z2_cols.append(vals[lpix])
            z2_pix_cols.append(vals)
    Z2 = np.column_stack(z2_cols) if z2_cols else np.zeros((lpix.size, 0))
    Z2_pixel = np.column_stack(z2_pix_cols) if z2_pix_cols else np.zeros((pid.size, 0))
    transforms = {}
    if standardize_covariates:
        Z1, transforms["counts"] = standardize(Z1)
        Z2, transforms["sizes"] = standardize(Z2)
        Z2_pixel = transforms["sizes"].apply(Z2_pixel)
    else:
        transforms["counts"] = CovariateTransform(np.zeros(Z1.shape[1]), np.ones(Z1.shape[1]))
        transforms["sizes"] = CovariateTransform(np.zeros(Z2.shape[1]), np.ones(Z2.shape[1]))

    ds = Dataset(counts=counts, landslide_pixel=lpix, sizes=sizes, Z1=Z1, Z2=Z2, exposure=grid.exposure, z1_names=count_covariates, z2_names=size_covariates)
    raw = {"pixels": tp, "landslides": tl, "adjacency": ta}
    if tc is not None:
        raw["landslide_covariates"] = tc
    return Ingested(ds, grid, graph, np.asarray(su_ids, dtype=np.int64), transforms, raw, Z2_pixel)


def export_raw(ing: Ingested, out_dir):
    """Write the ingested tables back out unchanged (values as read)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, t in ing.raw.items():
        write_table(out / f"{name}.csv", t.columns, t.rows)


def write_transforms(path, transforms: dict[str, CovariateTransform], names: dict[str, tuple], comments=()):
    rows = []
    for side, t in transforms.items():
        for n, m, s in zip(names[side], t.mean, t.sd):
            rows.append([side, n, float(m), float(s)])
    write_table(path, ["side", "covariate", "mean", "sd"], rows, comments)


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class DataSection:
    pixels: str = "pixels.csv"
    landslides: str = "landslides.csv"
    adjacency: str = "adjacency.csv"
    landslide_covariates: str = ""
    count_covariates: tuple = ()
    size_covariates: tuple = ()
    standardize: bool = True


@dataclass
class ModelSection:
    family: str = "lognormal"
    submodel: str = "M1"
    theta_init: tuple = ()


@dataclass
class SamplerSection:
    n_iter: int = 100_000
    burn_in: int = 75_000
    thin: int = 1
    seed: int = 0
    fixed_precision: float = 1000.0


@dataclass
class EvalSection:
    fold_mode: str = "slope-unit-kfold"
    K: int = 10
    size_threshold: float = math.nan  # nan: mean observed size
    count_threshold: float = 1.0
    quantiles: tuple = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
    chain: str = ""  # chain archive for predict / hazard; default <out>/chain.npz


@dataclass
class SimulateSection:
    """Synthetic landscape size; the simulate subcommand also writes a fit config with the longer simulation chain."""

    n_units: int = 80
    n_side: int = 55
    n_covariates: int = 9


SIMULATION_CHAIN = {"n_iter": 250_000, "burn_in": 187_500, "thin": 100}


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    eval: EvalSection = field(default_factory=EvalSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    base_dir: str = "."

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def echo(self) -> list[str]:
        """``section.key = value`` lines describing the resolved configuration."""
        out = []
        for sec in ("data", "model", "sampler", "eval", "simulate"):
            for k, v in asdict(getattr(self, sec)).items():
                out.append(f"{sec}.{k} = {_to_text(v)}")
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for sec in ("data", "model", "sampler", "eval", "simulate"):
            cp[sec] = {k: _to_text(v) for k, v in asdict(getattr(self, sec)).items()}
        buf = _io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _to_text(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(fmt(x) for x in v)
    return fmt(v)


def _coerce(text: str, default, key: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            b = configparser.ConfigParser.BOOLEAN_STATES.get(text.lower())
            if b is None:
                raise ValueError
            return b
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if key in ("quantiles", "theta_init"):
                return tuple(float(t) for t in items)
            return tuple(items)
    except ValueError:
        raise DomainError(f"config: cannot parse {key} = {text!r}") from None
    return text


def load_config(path=None) -> RunConfig:
    """Read an INI-style config; missing keys keep their defaults, unknown keys are errors."""
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise DomainError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case-sensitive (K)
    cp.read(path)
    cfg.base_dir = str(path.parent)
    for sec in cp.sections():
        if sec not in ("data", "model", "sampler", "eval", "simulate"):
            raise DomainError(f"config: unknown section [{sec}]")
        target = getattr(cfg, sec)
        names = {f.name for f in fields(target)}
        for key, text in cp[sec].items():
            if key not in names:
                raise DomainError(f"config: unknown key {key!r} in [{sec}]")
            setattr(target, key, _coerce(text, getattr(target, key), key))
    return cfg


def error_record(exc: BaseException, subcommand: str | None) -> str:
    return json.dumps({"status": "error", "subcommand": subcommand, "error": type(exc).__name__, "message": str(exc)}, sort_keys=True)
