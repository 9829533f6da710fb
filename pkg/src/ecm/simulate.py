"""Seeded Monte Carlo samples of deformed contours.

Three scenarios deform a base contour (the analytic benchmark or a fitted
Fourier model):

``roughness``
    pointwise Gaussian noise; the last two samples are outliers with large
    noise on ``x`` and on ``y`` respectively;
``amplitude``
    a periodic bump on the first benchmark side (or shifted Fourier
    coefficients of ``y``) whose size is drawn from a safe or an outlying
    law, plus a mild nuisance warp;
``phase``
    ``y`` is re-timed by a quadratic warp whose coefficient comes from a safe
    or an outlying law.

Random streams
--------------
Every sample ``i`` draws from its own ``numpy.random.Generator`` backed by the
counter-based Philox bit generator, seeded by the ``i``-th child of
``SeedSequence(seed)``. Draws for one sample therefore never depend on how
many other samples exist or in which order they are generated.
"""

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import fda
from .geometry import BENCHMARK_BREAKS, ContourLayer, benchmark_xy
from .geometry.fourier import FourierContourModel, design_matrix

__all__ = [
    "ConfigError",
    "PRESETS",
    "ScenarioConfig",
    "SimulatedSample",
    "load_config",
    "preset",
    "sample_streams",
    "simulate",
    "sim_amplitude",
    "sim_phase",
    "sim_roughness",
]

SCENARIOS = ("roughness", "amplitude", "phase")
SHAPES = ("benchmark", "fourier")
CROSS_SHRINK = 0.99
MAX_REDRAWS = 1000
SIDE_END = float(BENCHMARK_BREAKS[1])  # the deformed benchmark side is [0, 0.25]


class ConfigError(ValueError):
    """Scenario configuration is invalid or cannot be simulated."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one simulation run.

    Variances are in mm^2; ``cross`` multiplies ``x(t) y(t)`` to give the
    pointwise covariance of safe roughness noise. Ranges are ``(low, high)``
    bounds of uniform laws.
    """

    scenario: str = "roughness"
    n_samples: int = 150
    seed: int = 0
    shape: str = "benchmark"
    model: str | None = None
    z: float = 1.0
    grid_size: int = 64
    bernoulli_p: float = 0.97
    # roughness
    safe_var_x: float = 5e-6
    safe_var_y: float = 9e-5
    cross: float = 5e-6
    outlier_var: float = 5e-4
    # amplitude
    safe_u: tuple = (0.0, 0.05)
    outlier_u: tuple = (0.1, 0.25)
    nuisance_warp: tuple = (-1.0, 1.0)
    harmonics: int | None = None
    # phase
    deform_u: tuple = (0.05, 0.12)
    safe_warp: tuple = (-0.2, 0.2)
    outlier_warp: tuple = (14.3, 14.5)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.shape not in SHAPES:
            raise ConfigError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.n_samples < 4:
            raise ConfigError("n_samples must be at least 4")
        if not 0.0 < self.bernoulli_p < 1.0 and self.bernoulli_p != 1.0:
            raise ConfigError("bernoulli_p must lie in (0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.grid_size < 3:
            raise ConfigError("grid_size must be at least 3")
        if self.shape == "fourier" and not self.model:
            raise ConfigError("fourier-shape scenarios need a fitted model file (model=...)")
        for name in ("safe_var_x", "safe_var_y", "outlier_var"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("safe_u", "outlier_u", "nuisance_warp", "deform_u", "safe_warp", "outlier_warp"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} must be an increasing (low, high) pair")
            object.__setattr__(self, name, (float(lo), float(hi)))

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _shape_presets():
    bench = {
        "sim1": dict(scenario="roughness"),
        "sim2": dict(scenario="amplitude"),
        "sim3": dict(scenario="phase"),
    }
    rough = {
        "gear": dict(safe_var_x=5e-2, safe_var_y=5e-2, cross=5e-5, outlier_var=2.0),
        "wheel": dict(safe_var_x=5e-2, safe_var_y=5e-2, cross=5e-5, outlier_var=2.0),
        "logo": dict(safe_var_x=5e-2, safe_var_y=5e-2, cross=5e-5, outlier_var=1.0),
        "tube": dict(safe_var_x=5e-3, safe_var_y=5e-3, cross=5e-6, outlier_var=0.25),
    }
    amp = {
        "gear": dict(safe_u=(0.0, 0.05), outlier_u=(0.0, 0.2), harmonics=40),
        "wheel": dict(safe_u=(0.0, 0.005), outlier_u=(0.0, 0.2), harmonics=74),
        "logo": dict(safe_u=(0.0, 0.5), outlier_u=(0.0, 2.0), harmonics=10),
        "tube": dict(safe_u=(0.0, 0.01), outlier_u=(0.0, 0.2), harmonics=25),
    }
    phase = {
        "gear": dict(safe_warp=(-0.05, 0.05), outlier_warp=(-0.3, 0.3)),
        "wheel": dict(safe_warp=(-0.05, 0.05), outlier_warp=(-0.5, 0.5)),
        "logo": dict(safe_warp=(-0.05, 0.05), outlier_warp=(-0.3, 0.3)),
        "tube": dict(safe_warp=(-0.05, 0.05), outlier_warp=(-0.5, 0.5)),
    }
    out = {f"benchmark-{k}": v for k, v in bench.items()}
    for shape in ("gear", "wheel", "logo", "tube"):
        base = dict(shape="fourier", harmonics=amp[shape]["harmonics"])
        out[f"{shape}-sim1"] = dict(base, scenario="roughness", **rough[shape])
        out[f"{shape}-sim2"] = dict(base, scenario="amplitude", **amp[shape])
        out[f"{shape}-sim3"] = dict(base, scenario="phase", **phase[shape])
    return out


PRESETS = _shape_presets()


def preset(name, **overrides):
    """Named paper configuration, optionally with fields overridden.

    Fourier-shape presets need ``model=<path to a fitted model JSON>``.
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    params = dict(PRESETS[name])
    params.update(overrides)
    if params.get("shape") == "fourier" and not params.get("model"):
        raise ConfigError(f"preset {name!r} needs a fitted Fourier model file (model=...)")
    return ScenarioConfig(**params)


def load_config(path, **overrides):
    """Read a JSON config; a ``preset`` key supplies defaults for the rest."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    name = data.pop("preset", None)
    data.update({k: v for k, v in overrides.items() if v is not None})
    if name is not None:
        return preset(name, **data)
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True, eq=False)
class SimulatedSample:
    contours: list
    ground_truth: np.ndarray
    seed: int
    config: ScenarioConfig
    warps: list = field(default_factory=list)
    redraws: int = 0
    warnings: tuple = ()

    def __post_init__(self):
        if len(self.contours) != len(self.ground_truth):
            raise ValueError("contours and ground truth differ in length")

    def __len__(self):
        return len(self.contours)

    def coordinate(self, name):
        """The ``x`` or ``y`` functions of all contours."""
        return [getattr(c, name) for c in self.contours]


def sample_streams(seed, n):
    """One independent Philox generator per sample index."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


# ---------------------------------------------------------------------------
# base shapes


class _Base:
    """Evaluates the base contour (and its ``y`` at warped times)."""

    def __init__(self, config):
        self.config = config
        self.t = fda.grid(config.grid_size)
        if config.shape == "benchmark":
            self.model = None
            self.x, self.y = benchmark_xy(self.t, config.z)
        else:
            self.model = FourierContourModel.load(config.model)
            k = config.harmonics or self.model.K
            if k > self.model.K:
                raise ConfigError(f"model has {self.model.K} harmonics, scenario perturbs {k}")
            self.harmonics = k
            self.x = self._series(self.t, self.model.a0, self.model.a, self.model.b)
            self.y = self._series(self.t, self.model.c0, self.model.c, self.model.d)
        self.x[-1], self.y[-1] = self.x[0], self.y[0]

    @staticmethod
    def _series(t, c0, cos, sin):
        A = design_matrix(t, len(cos))
        return A @ np.concatenate([[c0], cos, sin])

    def y_at(self, t):
        if self.model is None:
            return benchmark_xy(t, self.config.z)[1]
        return self._series(t, self.model.c0, self.model.c, self.model.d)


def _contour(config, x, y):
    x = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    x[-1], y[-1] = x[0], y[0]
    return ContourLayer(config.z, fda.SampledFunction(x), fda.SampledFunction(y), True)


def _side_bump(t, u1, u2, z_y=0.0):
    """Periodic deformation of the first benchmark side (zero at both ends)."""
    w = 2.0 * np.pi * t / SIDE_END
    return z_y + u1 * np.sin(w) + u2 * np.cos(w) - u2


def _side_warp(t, coef, end=SIDE_END):
    """``t + coef * t * (t - end)`` on ``[0, end]``, identity elsewhere."""
    out = np.array(t, dtype=float)
    inside = t <= end
    out[inside] = t[inside] + coef * t[inside] * (t[inside] - end)
    return out


def _monotone_range(end):
    """Open interval of quadratic-warp coefficients giving increasing warps
    ``t + c t (t - end)`` on ``[0, end]``: slope ``1 + c (2t - end)``."""
    bound = 1.0 / end
    return -bound, bound


def _draw_warp_coef(rng, lo, hi, end):
    """Uniform draw on ``(lo, hi)`` rejected until the warp is increasing."""
    m_lo, m_hi = _monotone_range(end)
    if hi <= m_lo or lo >= m_hi:
        raise ConfigError(
            f"warp coefficient range ({lo}, {hi}) never yields an increasing warp "
            f"t + c t (t - {end}); coefficients must lie in ({m_lo:g}, {m_hi:g})"
        )
    for tries in range(MAX_REDRAWS):
        c = rng.uniform(lo, hi)
        if m_lo < c < m_hi:
            return c, tries
    raise ConfigError(f"no increasing warp in {MAX_REDRAWS} draws from ({lo}, {hi})")


# ---------------------------------------------------------------------------
# scenarios


def _cov_factor(config, x, y):
    """Per-node coefficients of the 2x2 Cholesky factor of the safe noise
    covariance, with the cross term shrunk where it breaks definiteness."""
    vx, vy = config.safe_var_x, config.safe_var_y
    cov = config.cross * x * y
    limit = np.sqrt(vx * vy)
    bad = np.abs(cov) > CROSS_SHRINK * limit
    cov = np.where(bad, CROSS_SHRINK * limit * np.sign(cov), cov)
    sx = np.sqrt(vx)
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(sx > 0, cov / sx, 0.0)
    l22 = np.sqrt(np.maximum(vy - l21**2, 0.0))
    note = ()
    if np.any(bad):
        note = (f"noise cross-covariance shrunk at {int(bad.sum())} grid nodes to keep it positive definite",)
    return sx, l21, l22, note


def sim_roughness(config):
    """Pointwise Gaussian noise; the last two members are the outliers.

    Noise is white in ``t`` and shared by ``t = 0`` and ``t = 1`` so each
    contour stays closed. Member ``N-2`` has ``x`` noise of variance
    ``outlier_var`` and member ``N-1`` the same on ``y``; their other
    coordinate gets the safe marginal noise.
    """
    base = _Base(config)
    n = config.n_samples
    sx, l21, l22, notes = _cov_factor(config, base.x, base.y)
    so = np.sqrt(config.outlier_var)
    m = config.grid_size - 1
    contours = []
    for i, rng in enumerate(sample_streams(config.seed, n)):
        z1 = rng.standard_normal(m)
        z2 = rng.standard_normal(m)
        ex = sx * z1
        ey = l21[:m] * z1 + l22[:m] * z2
        if i == n - 2:
            ex = so * z1
            ey = np.sqrt(config.safe_var_y) * z2
        elif i == n - 1:
            ex = sx * z1
            ey = so * z2
        ex = np.append(ex, ex[0])
        ey = np.append(ey, ey[0])
        contours.append(_contour(config, base.x + ex, base.y + ey))
    truth = np.zeros(n, dtype=bool)
    truth[-2:] = True
    ident = [fda.grid(config.grid_size)] * n
    return SimulatedSample(contours, truth, config.seed, config, ident, 0, notes)


def sim_amplitude(config):
    """Safe or outlying amplitude deformation of ``y`` per Bernoulli draw.

    Benchmark: the first side gets ``u1 sin(w t) + u2 cos(w t) - u2`` with
    ``w = 2 pi / 0.25``, then ``y`` is re-timed on that side by
    ``t + a t (t - 0.25)``. Fourier shapes: ``u1`` and ``u2`` are added to
    every cosine and sine coefficient of ``y`` up to the scenario's harmonic.
    """
    base = _Base(config)
    n = config.n_samples
    t = base.t
    contours, truth, warps = [], np.zeros(n, dtype=bool), []
    redraws = 0
    for i, rng in enumerate(sample_streams(config.seed, n)):
        safe = rng.uniform() < config.bernoulli_p
        truth[i] = not safe
        lo, hi = config.safe_u if safe else config.outlier_u
        u1, u2 = rng.uniform(lo, hi, size=2)
        if base.model is None:
            coef, tries = _draw_warp_coef(rng, *config.nuisance_warp, SIDE_END)
            redraws += tries
            gam = _side_warp(t, coef)
            y = np.where(gam <= SIDE_END, _side_bump(gam, u1, u2, base.y[0]), base.y_at(gam))
            warps.append(gam)
        else:
            k = base.harmonics
            mdl = base.model
            dc = np.zeros(mdl.K)
            dc[:k] = 1.0
            y = base._series(t, mdl.c0, mdl.c + u1 * dc, mdl.d + u2 * dc)
            warps.append(t.copy())
        contours.append(_contour(config, base.x, y))
    return SimulatedSample(contours, truth, config.seed, config, warps, redraws)


def sim_phase(config):
    """Safe or outlying re-timing of ``y`` per Bernoulli draw.

    Benchmark: every member gets the side deformation with
    ``u ~ deform_u``, then ``y`` is re-timed on the first side by
    ``t + c t (t - 0.25)``. Fourier shapes re-time the whole contour with
    ``t + c t (t - 1)``. Coefficients making the warp non-increasing are
    redrawn; a range with no increasing warp raises :class:`ConfigError`.
    """
    base = _Base(config)
    n = config.n_samples
    t = base.t
    end = SIDE_END if base.model is None else 1.0
    for lo, hi in (config.safe_warp, config.outlier_warp):
        m_lo, m_hi = _monotone_range(end)
        if hi <= m_lo or lo >= m_hi:
            raise ConfigError(
                f"warp coefficient range ({lo}, {hi}) never yields an increasing warp "
                f"t + c t (t - {end}); coefficients must lie in ({m_lo:g}, {m_hi:g})"
            )
    contours, truth, warps = [], np.zeros(n, dtype=bool), []
    redraws = 0
    for i, rng in enumerate(sample_streams(config.seed, n)):
        safe = rng.uniform() < config.bernoulli_p
        truth[i] = not safe
        coef, tries = _draw_warp_coef(rng, *(config.safe_warp if safe else config.outlier_warp), end)
        redraws += tries
        gam = _side_warp(t, coef, end)
        if base.model is None:
            u1, u2 = rng.uniform(*config.deform_u, size=2)
            y = np.where(gam <= SIDE_END, _side_bump(gam, u1, u2, base.y[0]), base.y_at(gam))
        else:
            y = base.y_at(gam)
        warps.append(gam)
        contours.append(_contour(config, base.x, y))
    return SimulatedSample(contours, truth, config.seed, config, warps, redraws)


def simulate(config):
    """Dispatch on ``config.scenario``."""
    fn = {"roughness": sim_roughness, "amplitude": sim_amplitude, "phase": sim_phase}[config.scenario]
    out = fn(config)
    for note in out.warnings:
        warnings.warn(note, stacklevel=2)
    return out


def with_seed(config, seed):
    return replace(config, seed=int(seed))
