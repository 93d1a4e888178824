"""Artifact emission: atomic files, CSV tables, SVG heatmaps and run manifests."""

import hashlib
import io
import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from matplotlib import colormaps, rc_context
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

import placekit
from placekit.app.config import settings
from placekit.app.models.manifest import RunManifest
from placekit.app.models.metric_report import MetricReport
from placekit.app.models.placement import AcquisitionField, CorrelationReport, PlacementPlan

logger = logging.getLogger(__name__)

MASK_FILL = "#d9d9d9"
COLORMAP = "viridis"
FIGURE_INCHES = 4.0
SVG_HASHSALT = "placekit"
VERSIONED_PACKAGES = ("numpy", "scipy", "torch", "pandas", "pydantic", "matplotlib")


def atomic_write(path: Path, data: bytes | str) -> Path:
    """Write ``data`` to a sibling temp file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """CSV with '.' decimals, no index and full float precision."""
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=settings.float_format, lineterminator="\n")
    return atomic_write(path, buffer.getvalue())


def field_frame(field: AcquisitionField) -> pd.DataFrame:
    """Columns x1, x2, alpha, kind."""
    return pd.DataFrame(
        {
            "x1": field.search_locations[:, 0],
            "x2": field.search_locations[:, 1],
            "alpha": field.values,
            "kind": str(field.kind),
        }
    )


def plan_frame(plan: PlacementPlan) -> pd.DataFrame:
    """Columns step, x1, x2, alpha; step 0 is the no-placement baseline."""
    rows: list[dict[str, Any]] = [{"step": 0, "x1": np.nan, "x2": np.nan, "alpha": np.nan}]
    for step, placed in enumerate(plan.steps, start=1):
        rows.append(
            {
                "step": step,
                "x1": placed.location[0],
                "x2": placed.location[1],
                "alpha": placed.alpha,
            }
        )
    return pd.DataFrame(rows, columns=["step", "x1", "x2", "alpha"])


def metric_rows(report: MetricReport, **keys: Any) -> dict[str, Any]:
    """Flat row of a report's headline metrics prefixed by identifying columns."""
    row = dict(keys)
    for name, (value, stderr) in report.headline().items():
        row[name] = value
        row[f"{name}_stderr"] = stderr
    row["n_targets"] = report.n_targets
    row["n_tasks"] = report.n_tasks
    return row


def correlation_frame(reports: list[CorrelationReport]) -> pd.DataFrame:
    """One row per (model, kind, oracle) correlation."""
    return pd.DataFrame(
        [
            {
                "model": r.model,
                "kind": str(r.kind),
                "oracle": str(r.oracle),
                "pearson_r": r.pearson_r,
                "pearson_lo": r.pearson_ci[0],
                "pearson_hi": r.pearson_ci[1],
                "kendall_kappa": r.kendall_kappa,
                "kendall_lo": r.kendall_ci[0],
                "kendall_hi": r.kendall_ci[1],
                "n_resamples": r.n_resamples,
                "n_sites": r.n_sites,
            }
            for r in reports
        ]
    )


def scatter_to_grid(values: np.ndarray, cells: np.ndarray, grid_size: int) -> np.ndarray:
    """Place per-site values on a (G, G) grid; cells without a site are NaN."""
    grid = np.full(grid_size * grid_size, np.nan)
    grid[np.asarray(cells, dtype=int)] = np.asarray(values, dtype=np.float64)
    return grid.reshape(grid_size, grid_size)


def heatmap_figure(values: np.ndarray, mask: np.ndarray | None = None, title: str = "") -> Figure:
    """Draw a rectangular field on an Agg-backed figure.

    ``values[i, j]`` is drawn at column ``i`` and row ``j`` counted from the
    bottom, so the second coordinate points up. Cells that are masked out or
    NaN use a fixed grey; the color scale spans the min and max of the rest.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D field, got shape {values.shape}")
    hidden = ~np.isfinite(values)
    if mask is not None:
        hidden |= ~np.asarray(mask, dtype=bool)
    shown = values[~hidden]
    low = float(shown.min()) if shown.size else 0.0
    high = float(shown.max()) if shown.size else 0.0

    fig = Figure(figsize=(FIGURE_INCHES, FIGURE_INCHES))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    image = ax.imshow(
        np.ma.masked_array(values.T, mask=hidden.T),
        origin="lower",
        cmap=colormaps[COLORMAP].with_extremes(bad=MASK_FILL),
        vmin=low,
        vmax=high,
        interpolation="nearest",
    )
    fig.colorbar(image, ax=ax)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    return fig


def heatmap_svg(values: np.ndarray, mask: np.ndarray | None = None, title: str = "") -> str:
    """Deterministic SVG of :func:`heatmap_figure`."""
    fig = heatmap_figure(values, mask, title)
    buffer = io.StringIO()
    with rc_context({"svg.hashsalt": SVG_HASHSALT}):
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def emit_heatmap(
    values: np.ndarray, path: Path, mask: np.ndarray | None = None, title: str = ""
) -> Path:
    """Write :func:`heatmap_svg` atomically."""
    return atomic_write(path, heatmap_svg(values, mask, title))


def config_digest(config: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def package_versions() -> dict[str, str]:
    """Installed versions of the numerical stack."""
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def build_manifest(
    command: str,
    config: dict[str, Any],
    seed: int,
    threads: int,
    started: datetime,
    artifacts: list[Path],
    directory: Path,
    notes: list[str] | None = None,
) -> RunManifest:
    """Manifest for a finished command; artifact paths are relative to ``directory``."""
    finished = datetime.now(timezone.utc)
    return RunManifest(
        command=command,
        placekit_version=placekit.__version__,
        config=config,
        config_sha256=config_digest(config),
        seed=seed,
        threads=threads,
        versions=package_versions(),
        started_at=started.isoformat(),
        wall_time_seconds=(finished - started).total_seconds(),
        artifacts=sorted(str(Path(p).relative_to(directory)) for p in artifacts),
        notes=notes or [],
    )


def write_manifest(manifest: RunManifest, directory: Path) -> Path:
    """Write ``manifest.json`` into the run directory."""
    path = atomic_write(Path(directory) / "manifest.json", manifest.model_dump_json(indent=2))
    logger.info("Manifest written to %s (%d artifacts)", path, len(manifest.artifacts))
    return path
