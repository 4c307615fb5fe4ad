"""Planar geometry helpers: angle wrapping, frame changes, polylines."""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Normalize an angle (scalar or array) to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    wrapped = a - TWO_PI * np.ceil((a - np.pi) / TWO_PI)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def rot2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def to_local(points, origin, yaw: float) -> np.ndarray:
    """Map world-frame points [..., 2] into the frame at (origin, yaw)."""
    p = np.asarray(points, dtype=float) - np.asarray(origin, dtype=float)
    # row-vector multiply by R(yaw) equals applying R(-yaw)
    return p @ rot2d(yaw)


def to_world(points, origin, yaw: float) -> np.ndarray:
    """Inverse of :func:`to_local`."""
    p = np.asarray(points, dtype=float)
    return p @ rot2d(yaw).T + np.asarray(origin, dtype=float)


def rotate(vectors, yaw: float) -> np.ndarray:
    """Rotate free vectors (no translation) by -yaw into a local frame."""
    return np.asarray(vectors, dtype=float) @ rot2d(yaw)


class Polyline:
    """Piecewise-linear path with arc-length queries.

    Consecutive duplicate vertices are dropped so segment directions are
    always defined.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two 2-D points")
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("polyline is degenerate (all points coincide)")
        self.points = pts
        seg = np.diff(pts, axis=0)
        self._seg_len = np.linalg.norm(seg, axis=1)
        self._seg_dir = seg / self._seg_len[:, None]
        self.cum_s = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self.cum_s[-1])

    def point_at(self, s: float) -> np.ndarray:
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.clip(np.searchsorted(self.cum_s, s, side="right") - 1, 0, len(self._seg_len) - 1))
        return self.points[i] + (s - self.cum_s[i]) * self._seg_dir[i]

    def heading_at(self, s: float) -> float:
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.clip(np.searchsorted(self.cum_s, s, side="right") - 1, 0, len(self._seg_len) - 1))
        d = self._seg_dir[i]
        return float(np.arctan2(d[1], d[0]))

    def project(self, point) -> tuple[float, float]:
        """Return (arc length of closest point, lateral distance)."""
        p = np.asarray(point, dtype=float)
        rel = p[None, :] - self.points[:-1]
        t = np.clip(np.einsum("ij,ij->i", rel, self._seg_dir) / self._seg_len, 0.0, 1.0)
        closest = self.points[:-1] + (t * self._seg_len)[:, None] * self._seg_dir
        d = np.linalg.norm(closest - p[None, :], axis=1)
        i = int(np.argmin(d))
        return float(self.cum_s[i] + t[i] * self._seg_len[i]), float(d[i])

    def max_curvature(self, ds: float = 2.0) -> float:
        """Largest |heading change per arc length| sampled every `ds` meters."""
        if self.length <= ds:
            return 0.0
        s = np.arange(0.0, self.length, ds)
        headings = np.array([self.heading_at(v) for v in s])
        dh = np.abs(wrap_angle(np.diff(headings)))
        return float(np.max(dh / ds)) if len(dh) else 0.0
