"""Deterministic SVG rendering of layouts for visual inspection."""

from __future__ import annotations

import colorsys
import logging
import zlib
from xml.sax.saxutils import escape

from .core import CategoryRegistry, Layout

log = logging.getLogger(__name__)

FALLBACK_COLOR = "#9e9e9e"
_FONT_SIZE = 13


def label_color(label: str) -> str:
    """Stable fill color per label: hue from a label hash."""
    hue = (zlib.crc32(label.encode("utf-8")) % 360) / 360.0
    r, g, b = colorsys.hls_to_rgb(hue, 0.55, 0.65)
    return "#{:02x}{:02x}{:02x}".format(int(r * 255), int(g * 255), int(b * 255))


def render_svg(layout: Layout, registry: CategoryRegistry | None = None) -> str:
    """Render a layout as an SVG document string.

    One page rect plus one rect and label per element.  Labels outside
    the registry (when one is given) fall back to grey with a warning.
    """
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{layout.page_w}" '
        f'height="{layout.page_h}" viewBox="0 0 {layout.page_w} {layout.page_h}">',
        f'<rect x="0" y="0" width="{layout.page_w}" height="{layout.page_h}" '
        f'fill="#ffffff" stroke="#202020"/>',
    ]
    for element in layout.elements:
        if registry is not None and not registry.contains(layout.domain, element.label):
            log.warning("label %r not in %s registry, using fallback color",
                        element.label, layout.domain.value)
            color = FALLBACK_COLOR
        else:
            color = label_color(element.label)
        b = element.box
        parts.append(
            f'<rect x="{b.x}" y="{b.y}" width="{b.w}" height="{b.h}" '
            f'fill="{color}" fill-opacity="0.45" stroke="{color}"/>')
        parts.append(
            f'<text x="{b.x + 4}" y="{b.y + _FONT_SIZE + 2}" '
            f'font-size="{_FONT_SIZE}" font-family="sans-serif" '
            f'fill="#202020">{escape(element.label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
