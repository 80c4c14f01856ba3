"""KITTI object label text format.

Each line holds 15 fields (ground truth) or 16 (detections with a score)::

    type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y [score]

``x y z`` is the bottom-center of the box (y points down), so the geometric
center sits ``h/2`` above it. The heading is carried over unchanged:
``theta = rotation_y``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import MalformedLine
from .geometry import Box3D, box_corners


@dataclass
class KittiLabelRow:
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple
    dimensions: tuple  # (h, w, l)
    location: tuple  # (x, y, z), bottom center
    rotation_y: float
    score: float = None

    def to_box(self):
        h, w, l = self.dimensions
        x, y, z = self.location
        return Box3D([x, y - h / 2, z], h=h, w=w, l=l, theta=self.rotation_y)

    @classmethod
    def from_box(cls, box, type="Car", score=None, cam=None, truncated=0.0, occluded=0):
        """Build a row from a box; ``alpha`` and the 2D box need ``cam``."""
        x, y, z = (float(v) for v in box.center)
        alpha = -10.0
        bbox = (0.0, 0.0, 0.0, 0.0)
        if cam is not None:
            alpha = float(box.theta - np.arctan2(x, z))
            corners = box_corners(box)
            if corners[:, 2].min() > 0:
                u = cam.fx * corners[:, 0] / corners[:, 2] + cam.cx
                v = cam.fy * corners[:, 1] / corners[:, 2] + cam.cy
                bbox = (
                    float(np.clip(u.min(), 0, cam.width - 1)),
                    float(np.clip(v.min(), 0, cam.height - 1)),
                    float(np.clip(u.max(), 0, cam.width - 1)),
                    float(np.clip(v.max(), 0, cam.height - 1)),
                )
        return cls(
            type=type,
            truncated=float(truncated),
            occluded=int(occluded),
            alpha=alpha,
            bbox2d=bbox,
            dimensions=(float(box.h), float(box.w), float(box.l)),
            location=(x, y + box.h / 2, z),
            rotation_y=float(box.theta),
            score=score,
        )


def parse_kitti_line(line, line_number=0):
    parts = line.split()
    if len(parts) not in (15, 16):
        raise MalformedLine(line_number, f"expected 15 or 16 fields, got {len(parts)}")
    try:
        values = [float(p) for p in parts[1:]]
        occluded = int(parts[2])
    except ValueError as exc:
        raise MalformedLine(line_number, str(exc)) from None
    if not all(np.isfinite(values)):
        raise MalformedLine(line_number, "non-finite value")
    return KittiLabelRow(
        type=parts[0],
        truncated=values[0],
        occluded=occluded,
        alpha=values[2],
        bbox2d=tuple(values[3:7]),
        dimensions=tuple(values[7:10]),
        location=tuple(values[10:13]),
        rotation_y=values[13],
        score=values[14] if len(values) == 15 else None,
    )


def parse_kitti_labels(text):
    """Parse a label file.

    Returns ``(rows, errors)``. Malformed lines are collected as
    :class:`MalformedLine` in ``errors``; blank lines are skipped.

    Raises
    ------
    MalformedLine
        If the text has content but not a single line parses.
    """
    rows, errors = [], []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(parse_kitti_line(line, number))
        except MalformedLine as exc:
            errors.append(exc)
    if errors and not rows:
        raise errors[0]
    return rows, errors


def _fmt(v, decimals):
    return repr(float(v)) if decimals is None else f"{v:.{decimals}f}"


def format_kitti_row(row, decimals=2):
    """One label line; ``decimals=None`` writes floats at full precision."""
    fields = [row.type, _fmt(row.truncated, decimals), str(int(row.occluded)), _fmt(row.alpha, decimals)]
    fields += [_fmt(v, decimals) for v in row.bbox2d]
    fields += [_fmt(v, decimals) for v in row.dimensions]
    fields += [_fmt(v, decimals) for v in row.location]
    fields.append(_fmt(row.rotation_y, decimals))
    if row.score is not None:
        fields.append(_fmt(row.score, decimals))
    return " ".join(fields)


def serialize_kitti_labels(rows, decimals=2):
    return "".join(format_kitti_row(r, decimals) + "\n" for r in rows)
