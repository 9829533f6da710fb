"""Real Fourier-series models of closed contours on t in [0, 1]."""

import json
from dataclasses import dataclass

import numpy as np

from .. import fda
from .contour import ContourLayer, GeometryError, atomic_write_text

__all__ = ["FitError", "FourierContourModel", "design_matrix", "eval_fourier", "fit_fourier", "rms_residual"]

RIDGE = 1e-12


class FitError(GeometryError):
    """The least-squares problem is rank deficient or the input is not closed."""


@dataclass(frozen=True, eq=False)
class FourierContourModel:
    """``x(t) = a0 + sum_k a_k cos(2 pi k t) + b_k sin(2 pi k t)``, and the
    same for ``y`` with ``c0, c_k, d_k``."""

    a0: float
    a: np.ndarray
    b: np.ndarray
    c0: float
    c: np.ndarray
    d: np.ndarray
    z: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.a) == len(self.b) == len(self.c) == len(self.d)):
            raise fda.InvalidInputError("coefficient vectors must all have length K")

    @property
    def K(self):
        return len(self.a)

    def perturbed(self, da=0.0, db=0.0, dc=0.0, dd=0.0):
        """Copy with the given offsets added to the harmonic coefficients."""
        return FourierContourModel(
            self.a0, self.a + da, self.b + db, self.c0, self.c + dc, self.d + dd, self.z
        )

    def to_dict(self):
        return {
            "K": self.K,
            "z": float(self.z),
            "a0": float(self.a0),
            "a": [float(v) for v in self.a],
            "b": [float(v) for v in self.b],
            "c0": float(self.c0),
            "c": [float(v) for v in self.c],
            "d": [float(v) for v in self.d],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            float(data["a0"]),
            np.asarray(data["a"], dtype=float),
            np.asarray(data["b"], dtype=float),
            float(data["c0"]),
            np.asarray(data["c"], dtype=float),
            np.asarray(data["d"], dtype=float),
            float(data.get("z", 0.0)),
        )

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def design_matrix(t, K):
    """Columns ``1, cos(2 pi k t), sin(2 pi k t)`` for ``k = 1..K``.

    The phase ``k t`` is reduced modulo 1 before scaling so that ``t = 0``
    and ``t = 1`` give bitwise-identical rows.
    """
    t = np.asarray(t, dtype=float)
    k = np.arange(1, K + 1)
    phase = 2.0 * np.pi * np.mod(np.outer(t, k), 1.0)
    return np.hstack([np.ones((t.size, 1)), np.cos(phase), np.sin(phase)])


def fit_fourier(contour, K):
    """Least-squares K-harmonic fit to both coordinates of a closed contour.

    Solves the ridge-stabilized normal equations ``(A'A + 1e-12 I) c = A'v``.
    The closing sample (equal to the first) is dropped so every point of the
    loop carries equal weight.
    """
    if not contour.closed:
        raise FitError("Fourier fitting needs a closed contour")
    K = int(K)
    if K < 0:
        raise FitError("K must be nonnegative")
    n = contour.grid_size - 1
    if n < 2 * K + 1:
        raise FitError(f"{n} distinct samples cannot determine {2 * K + 1} Fourier coefficients")
    t = contour.t[:-1]
    A = design_matrix(t, K)
    gram = A.T @ A
    gram[np.diag_indices_from(gram)] += RIDGE
    rhs = A.T @ np.column_stack([contour.x.values[:-1], contour.y.values[:-1]])
    coef = np.linalg.solve(gram, rhs)
    cx, cy = coef[:, 0], coef[:, 1]
    return FourierContourModel(
        cx[0], cx[1 : K + 1], cx[K + 1 :], cy[0], cy[1 : K + 1], cy[K + 1 :], contour.z
    )


def eval_fourier(model, t_grid):
    """Evaluate the model; ``t_grid`` is a grid size or the uniform grid itself."""
    t = fda.grid(t_grid) if np.isscalar(t_grid) else np.asarray(t_grid, dtype=float)
    A = design_matrix(t, model.K)
    # row-wise sums (not BLAS) so identical rows, e.g. t = 0 and t = 1,
    # evaluate to identical values
    x = (A * np.concatenate([[model.a0], model.a, model.b])).sum(axis=1)
    y = (A * np.concatenate([[model.c0], model.c, model.d])).sum(axis=1)
    return ContourLayer(model.z, fda.SampledFunction(x), fda.SampledFunction(y), closed=True)


def rms_residual(model, contour):
    """Root-mean-square Euclidean distance between the contour samples
    (closing sample excluded) and the model at the same parameters."""
    fitted = eval_fourier(model, contour.t)
    d = contour.points()[:-1] - fitted.points()[:-1]
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))
