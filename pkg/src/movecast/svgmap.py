"""Self-contained SVG heatmaps of grid densities with priority bands.

The two bands mark the cells a patrol would cover first: the densest cells
filling up to 500 km², then the next band up to 1000 km². Cells are ranked
by density with ties broken row-major so the bands are reproducible.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geo import Grid

_CELL_PX = 8.0
_MARGIN = 4.0


def band_cells(
    values: np.ndarray, grid: Grid, area_limits: tuple[float, ...] = (500.0, 1000.0)
) -> list[np.ndarray]:
    """Flat cell indices for each priority band, densest first.

    Band k holds the top-ranked cells whose cumulative area stays within
    ``area_limits[k]`` km², excluding cells already in earlier bands.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_cells,):
        raise ValueError("values must be flat over the grid cells")
    if any(b <= a for a, b in zip(area_limits, area_limits[1:])):
        raise ValueError("area limits must increase")
    rows, cols = np.divmod(np.arange(grid.n_cells), grid.ncols)
    order = np.lexsort((cols, rows, -values))
    max_cells = [int(limit // grid.cell_area) for limit in area_limits]
    bands = []
    prev = 0
    for top in max_cells:
        top = min(top, grid.n_cells)
        bands.append(order[prev:top])
        prev = max(prev, top)
    return bands


def _shade(frac: float) -> str:
    """Light-to-dark blue ramp; frac 0 is faint, 1 is saturated."""
    top = np.array([8, 48, 107])
    bottom = np.array([247, 251, 255])
    rgb = np.rint(bottom + (top - bottom) * frac).astype(int)
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def write_svg_heatmap(
    path,
    grid: Grid,
    values: np.ndarray,
    title: str = "",
    area_limits: tuple[float, ...] = (500.0, 1000.0),
) -> None:
    """Render the density surface with the priority bands outlined."""
    values = np.asarray(values, dtype=float)
    bands = band_cells(values, grid, area_limits)
    band_colors = ["#d7301f", "#fc8d59", "#fee8c8", "#ffffcc"]
    vmax = float(values.max())
    width = grid.ncols * _CELL_PX + 2 * _MARGIN
    height = grid.nrows * _CELL_PX + 2 * _MARGIN + (18 if title else 0)
    top_off = _MARGIN + (18 if title else 0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" '
        f'height="{height:g}" viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_MARGIN}" y="{_MARGIN + 10}" font-family="sans-serif" '
            f'font-size="11">{title}</text>'
        )
    for idx in range(grid.n_cells):
        row, col = divmod(idx, grid.ncols)
        frac = values[idx] / vmax if vmax > 0 else 0.0
        x = _MARGIN + col * _CELL_PX
        # row 0 is the southern edge; SVG y grows downward
        y = top_off + (grid.nrows - 1 - row) * _CELL_PX
        parts.append(
            f'<rect x="{x:g}" y="{y:g}" width="{_CELL_PX:g}" height="{_CELL_PX:g}" '
            f'fill="{_shade(frac)}"/>'
        )
    for band, color in zip(bands, band_colors):
        for idx in band:
            row, col = divmod(int(idx), grid.ncols)
            x = _MARGIN + col * _CELL_PX
            y = top_off + (grid.nrows - 1 - row) * _CELL_PX
            parts.append(
                f'<rect x="{x:g}" y="{y:g}" width="{_CELL_PX:g}" '
                f'height="{_CELL_PX:g}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
