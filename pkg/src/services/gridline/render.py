"""
SVG rendering of scenes and predictions.

Segments and polylines are colored by their directed orientation through the
hsv colormap, so a line and its reverse get opposite hues. The raster, when
given, is embedded as a grayscale PNG underneath.
"""

import io
import math
import pathlib
from typing import Sequence

import drawsvg as draw
import matplotlib
import numpy as np
from matplotlib.colors import to_hex

from src.core.utils import write_bytes_atomic
from src.services.gridline.geom import ImageSegment, Polyline

matplotlib.use("Agg")

ORIENTATION_COLORMAP = "hsv"


def orientation_color(angle: float) -> str:
    """Hex color of a directed angle in radians; -pi and pi share a hue."""
    position = ((angle + math.pi) / (2 * math.pi)) % 1.0
    return to_hex(matplotlib.colormaps[ORIENTATION_COLORMAP](position))


def _raster_png(raster: np.ndarray) -> bytes:
    import matplotlib.pyplot as plt  # pylint: disable=import-outside-toplevel

    buffer = io.BytesIO()
    plt.imsave(buffer, np.asarray(raster), cmap="gray", vmin=0, vmax=255, format="png")
    return buffer.getvalue()


def render_svg(
    width: int,
    height: int,
    raster: np.ndarray | None = None,
    segments: Sequence[ImageSegment] = (),
    polylines: Sequence[Polyline] = (),
    cell_size: int | None = None,
    scale: float = 4.0,
    stroke_width: float = 1.5,
) -> draw.Drawing:
    """
    Draws an image with its segments and polylines.

    Args:
        width, height (int): Image size in pixels.
        raster (np.ndarray, optional): Grayscale background.
        segments (Sequence[ImageSegment]): Drawn one line each; opacity
            follows the confidence.
        polylines (Sequence[Polyline]): Drawn edge by edge.
        cell_size (int, optional): Overlay the cell grid.
        scale (float, optional): Output pixels per image pixel.
        stroke_width (float, optional): Line width in output pixels.

    Returns:
        draw.Drawing: The figure; see :func:`save_svg`.
    """
    d = draw.Drawing(width * scale, height * scale)
    d.append(draw.Rectangle(0, 0, width * scale, height * scale, fill="black"))
    if raster is not None:
        d.append(
            draw.Image(
                0,
                0,
                width * scale,
                height * scale,
                data=_raster_png(raster),
                mime_type="image/png",
                embed=True,
                style="image-rendering:pixelated",
            )
        )

    if cell_size:
        grid = draw.Group(stroke="#404040", stroke_width=0.5)
        for x in range(0, width + 1, cell_size):
            grid.append(draw.Line(x * scale, 0, x * scale, height * scale))
        for y in range(0, height + 1, cell_size):
            grid.append(draw.Line(0, y * scale, width * scale, y * scale))
        d.append(grid)

    for polyline in polylines:
        points = polyline.as_array()
        for (u0, v0), (u1, v1) in zip(points, points[1:]):
            d.append(
                draw.Line(
                    u0 * scale,
                    v0 * scale,
                    u1 * scale,
                    v1 * scale,
                    stroke=orientation_color(math.atan2(v1 - v0, u1 - u0)),
                    stroke_width=stroke_width,
                    stroke_linecap="round",
                )
            )

    for segment in segments:
        su, sv, eu, ev = segment.coords() * scale
        d.append(
            draw.Line(
                su,
                sv,
                eu,
                ev,
                stroke=orientation_color(segment.angle),
                stroke_width=stroke_width,
                stroke_opacity=max(0.1, min(1.0, segment.confidence)),
            )
        )
        d.append(draw.Circle(su, sv, stroke_width, fill=orientation_color(segment.angle)))
    return d


def save_svg(drawing: draw.Drawing, filepath: str | pathlib.Path) -> pathlib.Path:
    return write_bytes_atomic(filepath, drawing.as_svg().encode("utf-8"))
