"""Elastic functional data analysis on a uniform grid over [0, 1].

Functions are stored as samples on ``t = linspace(0, 1, n)``. Derivatives use
second-order finite differences (central inside, one-sided at the ends),
warped evaluation uses piecewise-linear interpolation, and every inner
product or norm is the trapezoidal rule on the grid.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _dp

__all__ = [
    "AlignedSample",
    "AmplitudeMedian",
    "ConvergenceWarning",
    "DomainError",
    "InvalidInputError",
    "OrthantError",
    "PhaseMedian",
    "SampledFunction",
    "Srsf",
    "SrtPoint",
    "TangentVector",
    "Warping",
    "align_sample",
    "amplitude_distance",
    "apply_warp",
    "compose",
    "exp_map",
    "from_srsf",
    "from_srt",
    "group_action",
    "identity_warp",
    "inner",
    "inv_exp_map",
    "invert",
    "karcher_median_amplitude",
    "karcher_median_phase",
    "l2_norm",
    "phase_distance",
    "to_srsf",
    "to_srt",
]

MAX_STEP = 7
REFINE_ITER = 20
ORBIT_RESIDUAL = 1e-3
SMALL_ANGLE = 1e-8
ANTIPODAL_MARGIN = 1e-6


class InvalidInputError(ValueError):
    """Input violates the invariants of a function representation."""


class DomainError(ValueError):
    """Input lies outside the domain where an operation is defined."""


class OrthantError(DomainError):
    """A sphere point left the positive orthant."""

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class ConvergenceWarning(UserWarning):
    """An iterative median stopped at its iteration cap."""


def _threads():
    raw = os.environ.get("ECM_THREADS")
    if not raw:
        return
    import numba

    try:
        wanted = int(raw)
    except ValueError:
        return
    numba.set_num_threads(max(1, min(wanted, numba.config.NUMBA_NUM_THREADS)))


_threads()


# ---------------------------------------------------------------------------
# grid helpers


def grid(n):
    return np.linspace(0.0, 1.0, n)


def derivative(values):
    """Second-order finite-difference derivative on the unit grid."""
    values = np.asarray(values, dtype=float)
    return np.gradient(values, 1.0 / (values.shape[-1] - 1), edge_order=2, axis=-1)


def _trapz_weights(n):
    w = np.full(n, 1.0 / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def inner(a, b):
    """Trapezoidal inner product of two sampled functions (last axis)."""
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    return np.sum(a * b * _trapz_weights(a.shape[-1]), axis=-1)


def l2_norm(a):
    return np.sqrt(np.maximum(inner(a, a), 0.0))


def _frozen(values, name, min_size=3):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} values must be one-dimensional")
    if arr.shape[0] < min_size:
        raise InvalidInputError(f"{name} needs at least {min_size} grid points, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} values must be finite")
    arr.setflags(write=False)
    return arr


def _check_grid(*items):
    sizes = {item.grid_size for item in items}
    if len(sizes) != 1:
        raise InvalidInputError(f"grid sizes differ: {sorted(sizes)}")


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Scalar function on [0, 1] sampled on a uniform grid."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "SampledFunction"))

    @property
    def grid_size(self):
        return self.values.shape[0]

    @property
    def t(self):
        return grid(self.grid_size)


@dataclass(frozen=True, eq=False)
class Srsf:
    """Square-root slope function ``sign(f') sqrt(|f'|)``."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "Srsf"))

    @property
    def grid_size(self):
        return self.values.shape[0]

    @property
    def norm(self):
        return float(l2_norm(self.values))


@dataclass(frozen=True, eq=False)
class Warping:
    """Boundary-fixing, strictly increasing reparameterization of [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values, "Warping")
        if arr[0] != 0.0 or arr[-1] != 1.0:
            raise InvalidInputError("Warping must satisfy gamma(0) = 0 and gamma(1) = 1 exactly")
        if np.any(np.diff(arr) <= 0.0):
            bad = int(np.argmax(np.diff(arr) <= 0.0))
            raise InvalidInputError(f"Warping is not strictly increasing at node {bad}")
        object.__setattr__(self, "values", arr)

    @property
    def grid_size(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class SrtPoint:
    """Square-root transform of a warp: a point on the unit Hilbert sphere.

    Entries are nonnegative; an entry can be exactly zero where the warp's
    slope estimate vanishes (for example ``gamma(t) = t**2`` at ``t = 0``).
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values, "SrtPoint")
        if np.any(arr < 0.0):
            raise OrthantError("SrtPoint has negative entries", arr)
        norm = float(l2_norm(arr))
        if abs(norm - 1.0) > 1e-8:
            raise InvalidInputError(f"SrtPoint must have unit norm, got {norm!r}")
        object.__setattr__(self, "values", arr)

    @property
    def grid_size(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Element of the tangent space of the sphere at ``base``."""

    values: np.ndarray
    base: SrtPoint

    def __post_init__(self):
        arr = _frozen(self.values, "TangentVector")
        if arr.shape[0] != self.base.grid_size:
            raise InvalidInputError("TangentVector and base point grids differ")
        if abs(float(inner(arr, self.base.values))) > 1e-8:
            raise InvalidInputError("TangentVector is not orthogonal to its base point")
        object.__setattr__(self, "values", arr)

    @property
    def grid_size(self):
        return self.values.shape[0]

    @property
    def norm(self):
        return float(l2_norm(self.values))


@dataclass(frozen=True, eq=False)
class AlignedSample:
    aligned_functions: list
    aligned_srsfs: list
    distances: np.ndarray
    warpings: list
    median_srsf: Srsf
    median_function: SampledFunction
    median_history: list = field(default_factory=list)
    converged: bool = True
    warning: str | None = None

    def __post_init__(self):
        sizes = {
            len(self.aligned_functions),
            len(self.aligned_srsfs),
            len(self.distances),
            len(self.warpings),
        }
        if len(sizes) != 1:
            raise InvalidInputError("AlignedSample lists must have equal length")
        d = np.array(self.distances, dtype=float)
        if np.any(d < 0):
            raise InvalidInputError("amplitude distances must be nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)

    def __len__(self):
        return len(self.warpings)


# ---------------------------------------------------------------------------
# transforms


def to_srsf(f):
    """Square-root slope function of ``f``."""
    df = derivative(f.values)
    if not np.all(np.isfinite(df)):
        raise InvalidInputError("non-finite derivative estimate")
    return Srsf(np.sign(df) * np.sqrt(np.abs(df)))


def from_srsf(q, f0=0.0):
    """Invert :func:`to_srsf`: ``f(t) = f0 + int_0^t q|q| ds``."""
    v = q.values
    return SampledFunction(f0 + cumulative_trapezoid(v * np.abs(v), grid(v.shape[0]), initial=0.0))


def identity_warp(n):
    return Warping(grid(n))


def apply_warp(f, gamma):
    """``f o gamma`` by linear interpolation of ``f`` at the warped nodes."""
    _check_grid(f, gamma)
    return SampledFunction(np.interp(gamma.values, f.t, f.values))


def _act(q_values, gamma_values):
    n = q_values.shape[-1]
    slope = np.maximum(derivative(gamma_values), 0.0)
    return np.interp(gamma_values, grid(n), q_values) * np.sqrt(slope)


def group_action(q, gamma):
    """``(q o gamma) sqrt(gamma')``: the SRSF of ``f o gamma``."""
    _check_grid(q, gamma)
    return Srsf(_act(q.values, gamma.values))


def compose(outer, inner_warp):
    """``outer o inner_warp``."""
    _check_grid(outer, inner_warp)
    return Warping(np.interp(inner_warp.values, grid(outer.grid_size), outer.values))


def invert(gamma):
    t = grid(gamma.grid_size)
    out = np.interp(t, gamma.values, t)
    out[0], out[-1] = 0.0, 1.0
    return Warping(out)


# ---------------------------------------------------------------------------
# amplitude


def _steps(max_step):
    return _dp.step_table(int(max_step))


def _align_rows(q_ref, rows, max_step=MAX_STEP, refine_iter=None):
    """Align each row to ``q_ref``; returns (squared distances, warp rows).

    The squared distances are the realized grid norms
    ``|| q_ref - (row, gamma) ||^2`` of the returned warps.
    """
    rows = np.ascontiguousarray(np.atleast_2d(rows), dtype=float)
    if refine_iter is None:
        refine_iter = REFINE_ITER
    return _dp.align_batch(
        np.ascontiguousarray(q_ref, dtype=float), rows, _steps(max_step), int(refine_iter)
    )


def amplitude_distance(q1, q2, max_step=MAX_STEP, refine=True):
    """Elastic amplitude distance and the warp that aligns ``q2`` to ``q1``.

    A dynamic program finds the best piecewise-linear warp through lattice
    nodes with step offsets up to ``max_step``. Lattice slopes are limited to
    ratios of small integers, which leaves a residual of a few percent even
    between members of one orbit, so by default the warp's node values are
    then polished by Levenberg-Marquardt on the grid objective.

    Parameters
    ----------
    q1, q2 : Srsf
        SRSFs on the same grid.
    max_step : int
        Largest step offset of the lattice path.
    refine : bool
        If true, return the realized ``|| q1 - group_action(q2, gamma) ||``
        of the polished warp. If false, return the square root of the optimal
        lattice path functional and the lattice warp.

    Returns
    -------
    distance : float
    warp : Warping
        ``gamma`` such that ``group_action(q2, gamma)`` approximates ``q1``.
    """
    _check_grid(q1, q2)
    cost, pi, pj = _dp.dp_lattice(q1.values, q2.values, _steps(max_step))
    warp = _dp.path_to_warp(pi, pj, q1.grid_size)
    if not refine or cost <= 0.0:
        return float(np.sqrt(max(cost, 0.0))), Warping(warp)
    warp, _ = _dp.refine_warp(q1.values, q2.values, warp, REFINE_ITER)
    warp[0], warp[-1] = 0.0, 1.0
    return float(l2_norm(q1.values - _act(q2.values, warp))), Warping(warp)


@dataclass(frozen=True, eq=False)
class AmplitudeMedian:
    median: Srsf
    objective: list
    converged: bool
    n_iter: int
    warping_rows: np.ndarray
    distance_rows: np.ndarray
    warning: str | None = None


def _medoid_l2(q):
    w = _trapz_weights(q.shape[1])
    sq = (q * q * w).sum(axis=1)
    gram = (q * w) @ q.T
    d = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0))
    return int(np.argmin(d.sum(axis=1)))


def karcher_median_amplitude(
    sample,
    step=0.3,
    tol=1e-5,
    max_iter=30,
    init="auto",
    max_step=MAX_STEP,
    max_backtrack=4,
):
    """Median of amplitude classes: minimizer of summed amplitude distances.

    Each iteration aligns the sample to the current median and moves the
    median a fraction ``step`` of the way toward the pointwise median of the
    aligned SRSFs. A candidate that does not lower the objective is retried
    with half the step, so the recorded objective never increases.

    ``init`` picks the starting sample member: ``"pairwise"`` minimizes the
    summed amplitude distance to the rest (quadratic in the sample size),
    ``"l2"`` minimizes the summed L2 distance between SRSFs, and ``"auto"``
    uses ``"pairwise"`` for samples of at most 10 members.

    Iteration also stops once the objective falls below ``1e-3 * sum ||q_i||``,
    the accuracy of the alignment itself, as happens for a sample lying in a
    single orbit.
    """
    if len(sample) < 1:
        raise InvalidInputError("empty sample")
    _check_grid(*sample)
    q = np.array([s.values for s in sample])
    n_samples = q.shape[0]
    if init == "auto":
        init = "pairwise" if n_samples <= 10 else "l2"

    if init == "pairwise":
        best = None
        for i in range(n_samples):
            costs, warps = _align_rows(q[i], q, max_step)
            obj = float(np.sqrt(np.maximum(costs, 0.0)).sum())
            if best is None or obj < best[0]:
                best = (obj, i, costs, warps)
        obj, start, costs, warps = best
    elif init == "l2":
        start = _medoid_l2(q)
        costs, warps = _align_rows(q[start], q, max_step)
        obj = float(np.sqrt(np.maximum(costs, 0.0)).sum())
    else:
        raise ValueError(f"unknown init {init!r}")

    current = q[start].copy()
    dists = np.sqrt(np.maximum(costs, 0.0))
    history = [obj]
    scale = float(sum(l2_norm(row) for row in q))
    converged = obj <= ORBIT_RESIDUAL * scale
    n_iter = 0
    while not converged and n_iter < max_iter:
        n_iter += 1
        aligned = np.array([_act(q[i], warps[i]) for i in range(n_samples)])
        target = np.median(aligned, axis=0)
        h = step
        accepted = None
        for _ in range(max_backtrack + 1):
            cand = current + h * (target - current)
            c_costs, c_warps = _align_rows(cand, q, max_step)
            c_dists = np.sqrt(np.maximum(c_costs, 0.0))
            if c_dists.sum() <= obj:
                accepted = (cand, c_dists, c_warps)
                break
            h *= 0.5
        if accepted is None:
            converged = True
            break
        cand, c_dists, c_warps = accepted
        c_obj = float(c_dists.sum())
        decrease = (obj - c_obj) / obj if obj > 0 else 0.0
        current, obj, dists, warps = cand, c_obj, c_dists, c_warps
        history.append(obj)
        if decrease < tol or obj <= ORBIT_RESIDUAL * scale:
            converged = True

    message = None
    if not converged:
        message = f"amplitude median stopped after {max_iter} iterations without meeting tol={tol}"
        warnings.warn(message, ConvergenceWarning, stacklevel=2)
    return AmplitudeMedian(
        median=Srsf(current),
        objective=history,
        converged=converged,
        n_iter=n_iter,
        warping_rows=warps,
        distance_rows=dists,
        warning=message,
    )


# ---------------------------------------------------------------------------
# phase: sphere geometry


def to_srt(gamma):
    """``sqrt(gamma')`` rescaled to unit norm."""
    psi = np.sqrt(np.maximum(derivative(gamma.values), 0.0))
    return SrtPoint(psi / l2_norm(psi))


def from_srt(psi):
    """Integrate ``psi**2`` and rescale so that ``gamma(1) = 1``."""
    v = np.asarray(psi.values, dtype=float)
    gam = cumulative_trapezoid(v * v, grid(v.shape[0]), initial=0.0)
    gam = gam / gam[-1]
    gam[-1] = 1.0
    return Warping(gam)


def _cos_angle(a, b):
    return float(np.clip(inner(a, b), -1.0, 1.0))


def _angle(a, b):
    """Great-circle angle between unit vectors, ``2 arcsin(||a - b|| / 2)``.

    Unlike ``arccos <a, b>`` this keeps full relative precision for nearby
    points and is exactly zero for identical ones.
    """
    return 2.0 * np.arcsin(np.clip(l2_norm(np.asarray(a) - np.asarray(b)) / 2.0, 0.0, 1.0))


def phase_distance(gamma1, gamma2):
    """Geodesic distance between the SRTs of two warps."""
    _check_grid(gamma1, gamma2)
    return float(_angle(to_srt(gamma1).values, to_srt(gamma2).values))


def _log_values(base, psi):
    c = _cos_angle(psi, base)
    theta = float(_angle(psi, base))
    if theta >= np.pi - ANTIPODAL_MARGIN:
        raise DomainError(f"inverse exponential map undefined for antipodal points (theta={theta:.6g})")
    if theta < SMALL_ANGLE:
        d = psi - base
        return d - inner(d, base) * base
    return theta / np.sin(theta) * (psi - c * base)


def _exp_values(base, nu):
    norm = float(l2_norm(nu))
    if norm < SMALL_ANGLE:
        return np.array(base, dtype=float)
    out = np.cos(norm) * base + np.sin(norm) * nu / norm
    return out / l2_norm(out)


def inv_exp_map(base, psi):
    """Tangent vector at ``base`` pointing along the geodesic to ``psi``."""
    _check_grid(base, psi)
    return TangentVector(_log_values(base.values, psi.values), base)


def exp_map(base, nu):
    """Point reached from ``base`` along the geodesic with initial velocity ``nu``.

    Raises :class:`OrthantError` (carrying the computed values) when the
    result has negative entries.
    """
    out = _exp_values(base.values, nu.values)
    if np.any(out < 0.0):
        raise OrthantError("exponential map left the positive orthant", out)
    return SrtPoint(out)


@dataclass(frozen=True, eq=False)
class PhaseMedian:
    median: SrtPoint
    objective: list
    converged: bool
    n_iter: int
    warning: str | None = None


def _sphere_objective(center, psis):
    return float(_angle(psis, center).sum())


def karcher_median_phase(warps, tol=1e-5, max_iter=30, max_backtrack=4):
    """Geometric median of warps on the SRT sphere (Weiszfeld iteration).

    Starts from the normalized extrinsic mean of the SRTs, unless a sample
    member scores strictly lower. Each step moves along the geodesic via the
    exponential map; steps that raise the objective are halved.
    """
    if len(warps) < 1:
        raise InvalidInputError("empty sample")
    _check_grid(*warps)
    psis = np.array([to_srt(g).values for g in warps])
    mean = psis.mean(axis=0)
    center = mean / l2_norm(mean)
    obj = _sphere_objective(center, psis)
    member_obj = [_sphere_objective(p, psis) for p in psis]
    best = int(np.argmin(member_obj))
    if member_obj[best] < obj * (1.0 - 1e-12):
        center, obj = psis[best].copy(), member_obj[best]

    history = [obj]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        logs = np.array([_log_values(center, p) for p in psis])
        dist = l2_norm(logs)
        keep = dist > SMALL_ANGLE
        if not np.any(keep):
            converged = True
            break
        direction = (logs[keep] / dist[keep, None]).sum(axis=0) / (1.0 / dist[keep]).sum()
        if l2_norm(direction) < 1e-14:
            converged = True
            break
        h = 1.0
        accepted = None
        for _ in range(max_backtrack + 1):
            cand = _exp_values(center, h * direction)
            c_obj = _sphere_objective(cand, psis)
            if c_obj <= obj:
                accepted = (cand, c_obj)
                break
            h *= 0.5
        if accepted is None:
            converged = True
            break
        cand, c_obj = accepted
        decrease = (obj - c_obj) / obj if obj > 0 else 0.0
        center, obj = cand, c_obj
        history.append(obj)
        if decrease < tol:
            converged = True
            break

    message = None
    if not converged:
        message = f"phase median stopped after {max_iter} iterations without meeting tol={tol}"
        warnings.warn(message, ConvergenceWarning, stacklevel=2)
    center = np.maximum(center, 0.0)
    center = center / l2_norm(center)
    return PhaseMedian(SrtPoint(center), history, converged, n_iter, message)


def mean_warp(warps):
    """Mean of warps in the tangent space of the identity's SRT."""
    n = warps[0].grid_size
    base = np.ones(n)
    logs = np.array([_log_values(base, to_srt(g).values) for g in warps])
    psi = np.abs(_exp_values(base, logs.mean(axis=0)))
    return from_srt(SrtPoint(psi / l2_norm(psi)))


# ---------------------------------------------------------------------------
# alignment


def align_sample(sample, max_step=MAX_STEP, **median_options):
    """Align a sample of functions to their amplitude median.

    Computes the Karcher median of the SRSFs, re-centres it in its orbit so
    the mean optimal warp is the identity, then aligns every function to it.
    """
    if len(sample) < 2:
        raise InvalidInputError("align_sample needs at least two functions")
    _check_grid(*sample)
    n = sample[0].grid_size
    srsfs = [to_srsf(f) for f in sample]
    med = karcher_median_amplitude(srsfs, max_step=max_step, **median_options)

    warps = [Warping(np.r_[0.0, w[1:-1], 1.0]) for w in med.warping_rows]
    gbar = mean_warp(warps)
    q_median = _act(med.median.values, invert(gbar).values)

    q = np.array([s.values for s in srsfs])
    _, rows = _align_rows(q_median, q, max_step)
    warpings = [Warping(w) for w in rows]
    aligned_q = [Srsf(_act(q[i], rows[i])) for i in range(len(sample))]
    aligned_f = [apply_warp(f, g) for f, g in zip(sample, warpings)]
    distances = np.array([l2_norm(a.values - q_median) for a in aligned_q])

    shift = float(np.median([inner(f.values, np.ones(n)) for f in sample]))
    f_med = from_srsf(Srsf(q_median)).values
    f_med = f_med - inner(f_med, np.ones(n)) + shift
    return AlignedSample(
        aligned_functions=aligned_f,
        aligned_srsfs=aligned_q,
        distances=distances,
        warpings=warpings,
        median_srsf=Srsf(q_median),
        median_function=SampledFunction(f_med),
        median_history=list(med.objective),
        converged=med.converged,
        warning=med.warning,
    )
