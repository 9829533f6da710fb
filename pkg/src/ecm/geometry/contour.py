"""Layer contours as pairs of coordinate functions, and the analytic benchmark."""

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .. import fda

__all__ = [
    "BENCHMARK_BREAKS",
    "ContourLayer",
    "GeometryError",
    "benchmark_contour",
    "benchmark_xy",
    "canonical_order",
    "read_contour_csv",
    "resample_closed",
    "write_contour_csv",
]

CLOSURE_TOL = 1e-9

# segment boundaries of the benchmark parameter
BENCHMARK_BREAKS = np.array([0.0, 0.25, 0.5, 0.75, 0.775, 0.8, 0.95, 0.975, 1.0])
BENCHMARK_Y = np.array([0.0, 0.0, 1.0, 1.0, 0.8, 0.8, 0.2, 0.2])
BUMP_HEIGHT = 0.1125
BUMP_CURVATURE = 20.0


class GeometryError(ValueError):
    """Invalid geometric input (bad mesh, degenerate contour, bad layer)."""


@dataclass(frozen=True, eq=False)
class ContourLayer:
    """Closed or open planar contour at height ``z`` as functions of ``t``."""

    z: float
    x: fda.SampledFunction
    y: fda.SampledFunction
    closed: bool = True

    def __post_init__(self):
        if self.x.grid_size != self.y.grid_size:
            raise fda.InvalidInputError("x and y must share the grid")
        if self.closed:
            gap = max(abs(self.x.values[-1] - self.x.values[0]), abs(self.y.values[-1] - self.y.values[0]))
            if gap > CLOSURE_TOL:
                raise GeometryError(f"closed contour does not return to its start (gap {gap:.3g})")

    @property
    def grid_size(self):
        return self.x.grid_size

    @property
    def t(self):
        return fda.grid(self.grid_size)

    def points(self):
        """``(n, 2)`` array of contour points."""
        return np.column_stack([self.x.values, self.y.values])

    @classmethod
    def from_points(cls, z, points, closed=True):
        points = np.asarray(points, dtype=float)
        return cls(float(z), fda.SampledFunction(points[:, 0]), fda.SampledFunction(points[:, 1]), closed)


def _benchmark_x_nodes(z):
    r = 0.25 * np.sqrt(z)
    return np.array([r, 1.0, 1.0, r, r, 0.25, 0.25, r])


def benchmark_xy(t, z=1.0):
    """Evaluate the eight-segment benchmark contour at parameters ``t``.

    Each segment interpolates linearly between node values, except that
    ``x`` on the sixth segment carries a parabolic bump of height 0.1125
    centred on the segment midpoint.
    """
    if not 0.0 <= z <= 1.0:
        raise fda.DomainError(f"layer height z must lie in [0, 1], got {z!r}")
    t = np.asarray(t, dtype=float)
    if np.any((t < 0.0) | (t > 1.0)):
        raise fda.DomainError("benchmark parameter must lie in [0, 1]")
    xn = _benchmark_x_nodes(z)
    yn = BENCHMARK_Y
    seg = np.clip(np.searchsorted(BENCHMARK_BREAKS, t, side="right") - 1, 0, 7)
    lo = BENCHMARK_BREAKS[seg]
    hi = BENCHMARK_BREAKS[seg + 1]
    frac = (t - lo) / (hi - lo)
    nxt = (seg + 1) % 8
    # x: segments 1, 3, 5, 7 (0-based 0, 2, 4, 6) ramp to the next node; the
    # others are constant. y: odd 0-based segments ramp, even ones constant.
    x_ramp = np.isin(seg, (0, 2, 4, 6))
    x = np.where(x_ramp, xn[seg] + (xn[nxt] - xn[seg]) * frac, xn[seg])
    bump = seg == 5
    mid = 0.5 * (BENCHMARK_BREAKS[5] + BENCHMARK_BREAKS[6])
    x = np.where(bump, xn[5] + BUMP_HEIGHT - BUMP_CURVATURE * (t - mid) ** 2, x)
    y_ramp = np.isin(seg, (1, 3, 5, 7))
    y = np.where(y_ramp, yn[seg] + (yn[nxt] - yn[seg]) * frac, yn[seg])
    return x, y


def benchmark_contour(z=1.0, grid_size=1024):
    """Benchmark layer contour at height ``z`` on a uniform ``t`` grid."""
    if grid_size < 3:
        raise fda.InvalidInputError("grid_size must be at least 3")
    x, y = benchmark_xy(fda.grid(grid_size), z)
    # t = 0 and t = 1 are the same point; make the closure exact
    x[-1], y[-1] = x[0], y[0]
    return ContourLayer(float(z), fda.SampledFunction(x), fda.SampledFunction(y), True)


def signed_area(points):
    """Shoelace area of a polygon given without its closing vertex."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def canonical_order(points):
    """Rotate and orient an open vertex cycle to the canonical traversal.

    The cycle is made counterclockwise and starts at the vertex with the
    lexicographically smallest ``(y, x)``.
    """
    p = np.asarray(points, dtype=float)
    if signed_area(p) < 0.0:
        p = p[::-1]
    start = int(np.lexsort((p[:, 0], p[:, 1]))[0])
    return np.roll(p, -start, axis=0)


def resample_closed(points, grid_size):
    """Resample a closed polygon (no repeated closing vertex) uniformly in arc
    length; the first and last samples are both the first vertex."""
    p = np.asarray(points, dtype=float)
    ring = np.vstack([p, p[:1]])
    seg = np.hypot(*np.diff(ring, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0.0:
        raise GeometryError("contour has zero length")
    target = fda.grid(grid_size) * total
    keep = np.concatenate([[True], seg > 0.0])
    x = np.interp(target, s[keep], ring[keep, 0])
    y = np.interp(target, s[keep], ring[keep, 1])
    x[-1], y[-1] = x[0], y[0]
    return np.column_stack([x, y])


def write_contour_csv(path, layer):
    """Write ``# z=<value>`` then ``t,x,y`` rows, atomically."""
    lines = [f"# z={layer.z!r}", "t,x,y"]
    t = layer.t
    for ti, xi, yi in zip(t, layer.x.values, layer.y.values):
        lines.append(f"{ti:.17g},{xi:.17g},{yi:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_contour_csv(path, closed=True):
    """Read a contour file written by :func:`write_contour_csv`."""
    z = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key.strip() == "z":
                    z = float(value)
                continue
            if line.startswith("t"):
                continue
            rows.append([float(v) for v in line.split(",")])
    if z is None:
        raise GeometryError(f"{path}: missing '# z=' header")
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] != 3 or data.shape[0] < 3:
        raise GeometryError(f"{path}: expected at least three t,x,y rows")
    if not np.allclose(data[:, 0], fda.grid(data.shape[0]), atol=1e-12):
        raise fda.InvalidInputError(f"{path}: t column is not a uniform grid on [0, 1]")
    return ContourLayer(z, fda.SampledFunction(data[:, 1]), fda.SampledFunction(data[:, 2]), closed)


def atomic_write_text(path, text):
    """Write ``text`` to a temporary file next to ``path`` and rename it."""
    atomic_write_bytes(path, text.encode())


def atomic_write_bytes(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
