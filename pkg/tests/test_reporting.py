"""Tests for artifact emission."""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from matplotlib.colors import to_hex
from matplotlib.image import AxesImage

from placekit.app.models import AcquisitionField, AcquisitionKind
from placekit.app.services.placement import greedy_place
from placekit.app.services.reporting import (
    MASK_FILL,
    atomic_write,
    config_digest,
    emit_heatmap,
    field_frame,
    heatmap_figure,
    heatmap_svg,
    plan_frame,
    scatter_to_grid,
    write_csv,
)
from tests.conftest import observation_task


def _image(values: np.ndarray, mask: np.ndarray | None = None) -> AxesImage:
    return heatmap_figure(values, mask).axes[0].images[0]


def test_masked_cell_is_grey() -> None:
    """Test a 2 x 2 field with one masked cell: three scale colors and one grey."""
    values = np.array([[0.0, 1.0], [2.0, 3.0]])
    mask = np.array([[True, True], [True, False]])

    image = _image(values, mask)

    drawn = image.get_array()
    assert np.ma.count_masked(drawn) == 1
    assert bool(drawn.mask[1, 1])
    assert to_hex(image.cmap.get_bad()) == MASK_FILL
    colors = {to_hex(rgba) for rgba in image.to_rgba(drawn).reshape(-1, 4)}
    assert len(colors) == 4 and MASK_FILL in colors


def test_heatmap_is_byte_identical_on_repeat() -> None:
    """Test that the same field renders to the same text."""
    values = np.random.default_rng(0).normal(size=(5, 4))

    first = heatmap_svg(values, title="alpha")

    assert first.startswith("<?xml")
    assert first == heatmap_svg(values, title="alpha")


def test_constant_field_uses_a_single_color() -> None:
    """Test that a zero-span field maps every cell to the bottom of the scale."""
    image = _image(np.full((3, 3), 7.0))

    colors = {to_hex(rgba) for rgba in image.to_rgba(image.get_array()).reshape(-1, 4)}
    assert colors == {"#440154"}


def test_nan_cells_are_hidden() -> None:
    """Test that NaN cells get the mask color."""
    image = _image(np.array([[np.nan, 1.0], [2.0, 3.0]]))

    drawn = image.get_array()
    assert np.ma.count_masked(drawn) == 1
    assert to_hex(image.to_rgba(drawn)[0, 0]) == MASK_FILL


def test_second_coordinate_points_up() -> None:
    """Test that values[i, j] is drawn at column i, row j from the bottom."""
    values = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])

    image = _image(values)

    assert image.origin == "lower"
    assert image.get_array().shape == (3, 2)
    assert image.get_array()[2, 0] == values[0, 2]


def test_heatmap_rejects_a_flat_field() -> None:
    """Test that only 2-D fields are drawn."""
    with pytest.raises(ValueError, match="2-D"):
        heatmap_figure(np.zeros(4))


def test_atomic_write_replaces_content(tmp_path: Path) -> None:
    """Test that atomic_write creates parents and leaves no temp files."""
    target = tmp_path / "nested" / "out.txt"

    atomic_write(target, "first")
    atomic_write(target, b"second")

    assert target.read_text() == "second"
    assert sorted(p.name for p in target.parent.iterdir()) == ["out.txt"]


def test_emit_heatmap_writes_svg(tmp_path: Path) -> None:
    """Test that the written file matches the rendered text."""
    values = np.eye(3)

    path = emit_heatmap(values, tmp_path / "map.svg")

    assert path.read_text(encoding="utf-8") == heatmap_svg(values)


def test_plan_frame_starts_with_a_baseline_row() -> None:
    """Test that step 0 has no location and later rows follow the plan."""
    task = observation_task([[-0.9, -0.9]], [0.0], [[0.0, 0.0]])
    search = np.array([[0.9, 0.9], [0.0, 0.0]])
    plan = greedy_place(None, AcquisitionKind.CONTEXT_DIST, [task], search, search, k=2)

    frame = plan_frame(plan)

    assert list(frame.columns) == ["step", "x1", "x2", "alpha"]
    assert frame["step"].tolist() == [0, 1, 2]
    assert frame.iloc[0][["x1", "x2", "alpha"]].isna().all()
    assert frame.iloc[1]["x1"] == 0.9


def test_field_csv_round_trips_through_pandas(tmp_path: Path) -> None:
    """Test the field table's columns and full-precision values."""
    field = AcquisitionField(
        search_locations=[[0.1, 0.2], [0.3, 0.4]], values=[1.0 / 3.0, 2.0], kind="JointMI"
    )

    path = write_csv(field_frame(field), tmp_path / "field.csv")

    frame = pd.read_csv(path)
    assert list(frame.columns) == ["x1", "x2", "alpha", "kind"]
    assert frame["alpha"].iloc[0] == 1.0 / 3.0
    assert frame["kind"].iloc[0] == "JointMI"


def test_scatter_to_grid_fills_missing_cells_with_nan() -> None:
    """Test that only the listed cells receive values."""
    grid = scatter_to_grid(np.array([5.0, 6.0]), np.array([0, 3]), grid_size=2)

    assert grid[0, 0] == 5.0 and grid[1, 1] == 6.0
    assert np.isnan(grid[0, 1]) and np.isnan(grid[1, 0])


def test_config_digest_ignores_key_order() -> None:
    """Test the digest depends on content, not insertion order."""
    first = config_digest({"a": 1, "b": {"c": 2, "d": 3}})
    second = config_digest({"b": {"d": 3, "c": 2}, "a": 1})

    assert first == second
    assert first != config_digest({"a": 2, "b": {"c": 2, "d": 3}})
