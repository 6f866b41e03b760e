"""Render the simulator's CSV artifacts into figure files.

This package is a strict consumer of the `elodyn` CLI's delimited outputs:
it never simulates, and each figure is a pure function of the input CSV
contents and the figure spec (timestamps in the image containers are
disabled, so re-rendering reproduces files byte for byte).

Figure kinds and their expected schemas:

* ``density_rho`` / ``density_k`` -- one or more histogram CSVs
  (``bin_left,bin_right,count,density``), overlaid with a legend keyed by
  the swept parameter from each file's header echo;
* ``bias`` -- one bias-scan CSV
  (``rho1,b2rho1,mean_X1,b_2meanX1,mean_b2X1,stderr``): both score-scale
  estimates against the skill's score scale, with the diagonal reference;
* ``kscan`` -- one K-scan CSV (``K,mean_abs_dev,stderr,t_star_used``):
  the estimate with a sqrt reference anchored exactly at the first grid
  point, in linear and log-log panels.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

__all__ = ["FigureSpec", "SchemaError", "CsvTable", "read_table",
           "kscan_reference", "render", "FIGURE_KINDS"]

_SCHEMAS = {
    "density_rho": ("bin_left", "bin_right", "count", "density"),
    "density_k": ("bin_left", "bin_right", "count", "density"),
    "bias": ("rho1", "b2rho1", "mean_X1", "b_2meanX1", "mean_b2X1", "stderr"),
    "kscan": ("K", "mean_abs_dev", "stderr", "t_star_used"),
}
FIGURE_KINDS = tuple(_SCHEMAS)

_LEGEND_KEY = {"density_rho": "rho1", "density_k": "k"}

# container metadata that would otherwise embed a creation time
_SAVE_METADATA = {
    ".png": {"Software": "elodyn-figures"},
    ".pdf": {"CreationDate": None},
    ".svg": {"Date": None},
}


class SchemaError(ValueError):
    """An input CSV does not match the expected column schema."""


@dataclass(frozen=True)
class FigureSpec:
    input_csvs: tuple[Path, ...]
    figure_kind: str
    output_path: Path

    @classmethod
    def create(cls, kind: str, inputs, output) -> "FigureSpec":
        if kind not in _SCHEMAS:
            raise ValueError(f"unknown figure kind {kind!r}; known: {FIGURE_KINDS}")
        paths = tuple(Path(p) for p in inputs)
        if not paths:
            raise ValueError("need at least one input CSV")
        return cls(input_csvs=paths, figure_kind=kind, output_path=Path(output))


@dataclass(frozen=True)
class CsvTable:
    path: Path
    header: dict
    columns: dict

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]


def read_table(path: Path) -> CsvTable:
    """Parse a CLI CSV: ``# key=value`` header lines, column line, float rows."""
    header: dict = {}
    names: list[str] | None = None
    rows: list[list[float]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            header.update(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            continue
        if names is None:
            names = line.split(",")
            continue
        rows.append([float(tok) for tok in line.split(",")])
    if names is None:
        raise SchemaError(f"{path}: no column header line found")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    columns = {name: data[:, idx] for idx, name in enumerate(names)}
    return CsvTable(path=Path(path), header=header, columns=columns)


def _validate(table: CsvTable, kind: str) -> None:
    missing = [c for c in _SCHEMAS[kind] if c not in table.columns]
    if missing:
        raise SchemaError(
            f"{table.path}: missing column(s) {', '.join(missing)} "
            f"required by figure kind {kind!r}")
    if next(iter(table.columns.values())).size == 0:
        raise SchemaError(f"{table.path}: no data rows")


def kscan_reference(k: np.ndarray, mean_abs_dev: np.ndarray) -> tuple[float, np.ndarray]:
    """Sqrt-law reference anchored at the first grid point.

    Returns ``(C, C * sqrt(k))`` computed as ``mean_abs_dev[0] * sqrt(k / k[0])``
    so the reference passes through the first data point exactly.
    """
    c = float(mean_abs_dev[0]) / float(np.sqrt(k[0]))
    return c, np.asarray(mean_abs_dev[0] * np.sqrt(np.asarray(k) / k[0]))


def _curve_label(table: CsvTable, key: str) -> tuple[float, str]:
    raw = table.header.get(key)
    if raw is None:
        return (float("inf"), table.path.stem)
    value = float(raw)
    return (value, f"{key}={value:g}")


def _render_density(tables: list[CsvTable], kind: str, ax) -> None:
    key = _LEGEND_KEY[kind]
    for sort_key, label, table in sorted(
            (*_curve_label(t, key), t) for t in tables):
        centers = 0.5 * (table.column("bin_left") + table.column("bin_right"))
        ax.plot(centers, table.column("density"), label=label, linewidth=1.2)
    ax.set_xlabel("first-player rating")
    ax.set_ylabel("density")
    ax.legend()


def _render_bias(table: CsvTable, ax) -> None:
    x = table.column("b2rho1")
    ax.plot(x, x, linestyle="--", color="0.5", label="diagonal")
    ax.plot(x, table.column("b_2meanX1"), marker=".", linestyle="-",
            label="score scale of mean rating")
    ax.plot(x, table.column("mean_b2X1"), marker="x", linestyle="none",
            label="mean predicted score")
    ax.set_xlabel("score scale of true skill")
    ax.set_ylabel("equilibrium estimate")
    ax.legend()


def _render_kscan(table: CsvTable, axes) -> None:
    k = table.column("K")
    dev = table.column("mean_abs_dev")
    c, ref = kscan_reference(k, dev)
    for ax, log in zip(axes, (False, True)):
        ax.plot(k, dev, marker="o", linestyle="-", markersize=3,
                label="mean |rating - skill|")
        ax.plot(k, ref, linestyle="--",
                label=f"C sqrt(K), C={c:.4g}")
        if log:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel("K")
        ax.legend()
    axes[0].set_ylabel("mean absolute deviation")


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    tables = [read_table(p) for p in spec.input_csvs]
    for table in tables:
        _validate(table, spec.figure_kind)

    if spec.figure_kind == "kscan":
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
        _render_kscan(_single(tables, spec.figure_kind), axes)
    elif spec.figure_kind == "bias":
        fig, ax = plt.subplots(figsize=(5.2, 4.2))
        _render_bias(_single(tables, spec.figure_kind), ax)
    else:
        fig, ax = plt.subplots(figsize=(5.2, 4.2))
        _render_density(tables, spec.figure_kind, ax)

    fig.tight_layout()
    suffix = spec.output_path.suffix.lower()
    metadata = _SAVE_METADATA.get(suffix)
    spec.output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output_path, dpi=150, metadata=metadata)
    plt.close(fig)
    return spec.output_path


def _single(tables: list[CsvTable], kind: str) -> CsvTable:
    if len(tables) != 1:
        raise ValueError(f"figure kind {kind!r} takes exactly one input CSV")
    return tables[0]
