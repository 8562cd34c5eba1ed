"""Polyline helpers used by lanes and controllers."""

from __future__ import annotations

import numpy as np

from . import kernels


class Polyline:
    """An ordered 2-D polyline with cached arc lengths.

    ``closed=True`` appends the first point so the curve wraps (used for the
    roundabout ring); arc lengths then wrap modulo ``total``.
    """

    __slots__ = ("pts", "cum", "total", "closed")

    def __init__(self, points, closed: bool = False):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("polyline needs at least two (x, y) points")
        if closed:
            pts = np.vstack([pts, pts[:1]])
        seg = np.diff(pts, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lens <= 0):
            raise ValueError("consecutive polyline points must be distinct")
        self.pts = pts
        self.cum = np.concatenate([[0.0], np.cumsum(lens)])
        self.total = float(self.cum[-1])
        self.closed = closed

    @property
    def n(self) -> int:
        return self.pts.shape[0]

    def point_at(self, s: float) -> tuple[float, float]:
        return kernels.polyline_point_at(self.pts, self.n, self.cum, self.total,
                                         self.closed, s)

    def heading_at(self, s: float) -> float:
        if self.closed:
            s = s % self.total
        s = min(max(s, 0.0), self.total)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), self.n - 2)
        dx = self.pts[i + 1, 0] - self.pts[i, 0]
        dy = self.pts[i + 1, 1] - self.pts[i, 1]
        return float(np.arctan2(dy, dx))

    def project(self, point) -> tuple[float, float]:
        """(arc length, signed lateral offset); lateral is positive to the left."""
        return kernels.polyline_project(self.pts, self.n, float(point[0]), float(point[1]))

    def project_many(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized projection of many points: arrays (s, lateral)."""
        p = np.asarray(points, dtype=float)
        a = self.pts[:-1]
        e = np.diff(self.pts, axis=0)
        L2 = (e * e).sum(axis=1)
        seg = np.sqrt(L2)
        # (n_pts, n_segs)
        dx = p[:, None, 0] - a[None, :, 0]
        dy = p[:, None, 1] - a[None, :, 1]
        t = np.clip((dx * e[None, :, 0] + dy * e[None, :, 1]) / L2[None, :], 0.0, 1.0)
        qx = a[None, :, 0] + t * e[None, :, 0]
        qy = a[None, :, 1] + t * e[None, :, 1]
        d2 = (p[:, None, 0] - qx) ** 2 + (p[:, None, 1] - qy) ** 2
        best = np.argmin(d2, axis=1)
        idx = np.arange(p.shape[0])
        tb = t[idx, best]
        s = self.cum[best] + tb * seg[best]
        cross = e[best, 0] * (p[:, 1] - a[best, 1]) - e[best, 1] * (p[:, 0] - a[best, 0])
        lat = cross / seg[best]
        return s, lat
