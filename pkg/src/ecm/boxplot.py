"""Translation, amplitude and phase boxplots and the per-sample outlier report.

The amplitude boxplot lives in the space of aligned SRSFs and the phase
boxplot in the tangent space of the SRT sphere at the phase median; both use
the same construction on vectors measured from the median:

1. order members by distance to the median; the ``floor(N/2)`` closest form
   the central region,
2. pick the quartile pair from the central region maximizing
   ``lambda * (d1 + d2) / d_max - (1 - lambda) * (<u1, u2> + 1)``,
3. ``IQR = d1 + d2`` and whiskers ``Q_k + whisker_factor * IQR * u_k``,
4. extremes are the non-central members, not beyond both whiskers, whose
   distance to the median is closest to each whisker's,
5. a member is an outlier when its distance exceeds the larger (or, with
   ``conservative=True``, the smaller) of the two extreme distances.

The translation boxplot is a classical Tukey boxplot of the function means.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import fda

__all__ = [
    "ComponentBoxplot",
    "InsufficientSampleError",
    "OutlierReport",
    "ReportConfig",
    "amplitude_boxplot",
    "classify",
    "classify_amplitude",
    "classify_phase",
    "classify_translation",
    "full_report",
    "merge_reports",
    "phase_boxplot",
    "translation_boxplot",
    "translation_values",
]

MIN_SAMPLES = 4
# distances below these floors are alignment or quadrature error, not shape
AMPLITUDE_FLOOR = 1e-2
PHASE_FLOOR = 1e-6


class InsufficientSampleError(ValueError):
    """Fewer members than a boxplot needs."""


@dataclass(frozen=True, eq=False)
class ComponentBoxplot:
    """Boxplot descriptors of one component.

    Elements (``median``, ``q1``, ...) are arrays in the component's own
    space: aligned SRSF values for amplitude, SRT values for phase, scalars
    for translation. ``distances`` holds every member's distance to the
    median and ``threshold`` the cut-off applied to it.
    """

    component: str
    median: object
    q1: object
    q3: object
    whisker1: object
    whisker3: object
    extreme1: int | None
    extreme3: int | None
    iqr: float
    lambda_: float
    whisker_factor: float
    conservative: bool
    distances: np.ndarray
    threshold: float
    lower_threshold: float | None = None
    q1_index: int | None = None
    q3_index: int | None = None
    central: tuple = ()
    whiskers_invertible: tuple = (True, True)

    def flags(self):
        if self.component == "translation":
            v = np.asarray(self.distances)
            return (v > self.threshold) | (v < self.lower_threshold)
        return np.asarray(self.distances) > self.threshold

    def to_dict(self):
        def enc(v):
            if v is None:
                return None
            if np.ndim(v) == 0:
                return float(v)
            return [float(x) for x in np.asarray(v)]

        out = {
            "component": self.component,
            "median": enc(self.median),
            "q1": enc(self.q1),
            "q3": enc(self.q3),
            "whisker1": enc(self.whisker1),
            "whisker3": enc(self.whisker3),
            "extreme1": self.extreme1,
            "extreme3": self.extreme3,
            "q1_index": self.q1_index,
            "q3_index": self.q3_index,
            "iqr": float(self.iqr),
            "lambda": float(self.lambda_),
            "whisker_factor": float(self.whisker_factor),
            "conservative": bool(self.conservative),
            "threshold": float(self.threshold),
            "central": [int(i) for i in self.central],
            "whiskers_invertible": [bool(b) for b in self.whiskers_invertible],
        }
        if self.lower_threshold is not None:
            out["lower_threshold"] = float(self.lower_threshold)
        return out


def _check_size(n):
    if n < MIN_SAMPLES:
        raise InsufficientSampleError(f"a boxplot needs at least {MIN_SAMPLES} members, got {n}")


def _check_lambda(lam, whisker_factor):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    if not whisker_factor > 0.0:
        raise ValueError(f"whisker_factor must be positive, got {whisker_factor!r}")


def _quartile_pair(vectors, dists, central, lam):
    """Exhaustive argmax of the quartile objective over central pairs.

    Returns positions into ``central``; the first maximizer in enumeration
    order wins, so the member closer to the median becomes the first quartile.
    """
    sub = vectors[central]
    d = dists[central]
    dmax = d.max()
    units = np.zeros_like(sub)
    nz = d > 0
    units[nz] = sub[nz] / d[nz, None]
    w = fda._trapz_weights(sub.shape[1])
    cos = (units * w) @ units.T
    spread = (d[:, None] + d[None, :]) / dmax if dmax > 0 else np.zeros_like(cos)
    score = lam * spread - (1.0 - lam) * (cos + 1.0)
    m = len(central)
    best, pair = -np.inf, (0, 1)
    for a in range(m):
        for b in range(m):
            if a != b and score[a, b] > best:
                best, pair = score[a, b], (a, b)
    return pair, units


def _elastic_box(vectors, dists, lam, whisker_factor, conservative, floor):
    """Boxplot construction on vectors from the median in a trapezoid space.

    Returns a dict of indices, whisker vectors and the threshold.
    """
    n = len(dists)
    order = np.argsort(dists, kind="stable")
    central = order[: n // 2]
    (a, b), units = _quartile_pair(vectors, dists, central, lam)
    i1, i3 = int(central[a]), int(central[b])
    d1, d3 = float(dists[i1]), float(dists[i3])
    iqr = d1 + d3
    w1 = vectors[i1] + whisker_factor * iqr * units[a]
    w3 = vectors[i3] + whisker_factor * iqr * units[b]
    wd1, wd3 = float(fda.l2_norm(w1)), float(fda.l2_norm(w3))

    # members beyond both whiskers cannot serve as extremes
    beyond = dists > max(wd1, wd3, floor)
    eligible = np.ones(n, dtype=bool)
    eligible[central] = False
    eligible &= ~beyond

    def closest(reach):
        # closeness is judged along the distance-to-median axis; in function
        # space the member nearest to a whisker element is simply one of the
        # members nearest to the median, which would collapse the cut-off
        idx = np.flatnonzero(eligible)
        if idx.size == 0:
            return None
        return int(idx[np.argmin(np.abs(dists[idx] - reach))])

    e1, e3 = closest(wd1), closest(wd3)
    t1 = float(dists[e1]) if e1 is not None else wd1
    t3 = float(dists[e3]) if e3 is not None else wd3
    threshold = max(min(t1, t3) if conservative else max(t1, t3), floor)
    # an extreme reference beyond the applied cut-off is itself an outlier
    if e1 is not None and dists[e1] > threshold:
        e1 = None
    if e3 is not None and dists[e3] > threshold:
        e3 = None
    return {
        "central": tuple(int(i) for i in central),
        "i1": i1,
        "i3": i3,
        "iqr": iqr,
        "w1": w1,
        "w3": w3,
        "e1": e1,
        "e3": e3,
        "threshold": threshold,
    }


def amplitude_boxplot(aligned, lambda_=0.5, whisker_factor=1.5, conservative=False):
    """Amplitude boxplot of an aligned sample.

    Parameters
    ----------
    aligned : AlignedSample
    lambda_ : float
        Weight of the spread term in the quartile objective, in [0, 1].
    whisker_factor : float
        Whisker length in units of the IQR.
    conservative : bool
        Use the smaller extreme distance as cut-off (flags more members).

    Returns
    -------
    ComponentBoxplot
        Elements are SRSF value arrays.
    """
    n = len(aligned)
    _check_size(n)
    _check_lambda(lambda_, whisker_factor)
    median = aligned.median_srsf.values
    q = np.array([s.values for s in aligned.aligned_srsfs])
    vectors = q - median
    dists = fda.l2_norm(vectors)
    floor = AMPLITUDE_FLOOR * float(fda.l2_norm(q).max())
    box = _elastic_box(vectors, dists, lambda_, whisker_factor, conservative, floor)
    return ComponentBoxplot(
        component="amplitude",
        median=median,
        q1=q[box["i1"]],
        q3=q[box["i3"]],
        whisker1=median + box["w1"],
        whisker3=median + box["w3"],
        extreme1=box["e1"],
        extreme3=box["e3"],
        iqr=box["iqr"],
        lambda_=float(lambda_),
        whisker_factor=float(whisker_factor),
        conservative=bool(conservative),
        distances=dists,
        threshold=box["threshold"],
        q1_index=box["i1"],
        q3_index=box["i3"],
        central=box["central"],
    )


def phase_boxplot(aligned, lambda_=0.5, whisker_factor=1.5, conservative=False, max_angle=np.pi / 2):
    """Phase boxplot of the alignment warps, built in the tangent space at
    their median SRT and mapped back to the sphere.

    Raises
    ------
    DomainError
        If a warp's SRT lies ``max_angle`` or farther from the median.
    """
    warps = aligned.warpings if hasattr(aligned, "warpings") else list(aligned)
    n = len(warps)
    _check_size(n)
    _check_lambda(lambda_, whisker_factor)
    med = fda.karcher_median_phase(warps)
    base = med.median.values
    psis = np.array([fda.to_srt(g).values for g in warps])
    angles = fda._angle(psis, base)
    far = np.flatnonzero(angles >= max_angle)
    if far.size:
        raise fda.DomainError(
            f"warp {int(far[0])} lies {angles[far[0]]:.4g} rad from the phase median "
            f"(limit {max_angle:.4g})"
        )
    vectors = np.array([fda._log_values(base, p) for p in psis])
    dists = fda.l2_norm(vectors)
    box = _elastic_box(vectors, dists, lambda_, whisker_factor, conservative, PHASE_FLOOR)
    ends = [fda._exp_values(base, box["w1"]), fda._exp_values(base, box["w3"])]
    return ComponentBoxplot(
        component="phase",
        median=base,
        q1=psis[box["i1"]],
        q3=psis[box["i3"]],
        whisker1=ends[0],
        whisker3=ends[1],
        extreme1=box["e1"],
        extreme3=box["e3"],
        iqr=box["iqr"],
        lambda_=float(lambda_),
        whisker_factor=float(whisker_factor),
        conservative=bool(conservative),
        distances=dists,
        threshold=box["threshold"],
        q1_index=box["i1"],
        q3_index=box["i3"],
        central=box["central"],
        whiskers_invertible=tuple(bool(np.all(e >= 0.0)) for e in ends),
    )


def translation_values(sample, statistic="mean"):
    """Translation scalar of each function: its mean over [0, 1] or ``f(0)``."""
    if statistic == "mean":
        return np.array([fda.inner(f.values, np.ones(f.grid_size)) for f in sample])
    if statistic == "f(0)":
        return np.array([f.values[0] for f in sample], dtype=float)
    raise ValueError(f"unknown translation statistic {statistic!r}")


def translation_boxplot(sample, whisker_factor=1.5, statistic="mean"):
    """Tukey boxplot of the translation scalars.

    Quartiles are linear-interpolation sample quantiles; values strictly
    outside ``[Q1 - k IQR, Q3 + k IQR]`` are outliers.
    """
    values = translation_values(sample, statistic) if not isinstance(sample, np.ndarray) else sample
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    _check_size(n)
    if not whisker_factor > 0.0:
        raise ValueError(f"whisker_factor must be positive, got {whisker_factor!r}")
    q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    iqr = float(q3 - q1)
    lo, hi = q1 - whisker_factor * iqr, q3 + whisker_factor * iqr
    inside = np.flatnonzero((values >= lo) & (values <= hi))
    e1 = int(inside[np.argmin(values[inside])]) if inside.size else None
    e3 = int(inside[np.argmax(values[inside])]) if inside.size else None
    return ComponentBoxplot(
        component="translation",
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        whisker1=float(lo),
        whisker3=float(hi),
        extreme1=e1,
        extreme3=e3,
        iqr=iqr,
        lambda_=0.5,
        whisker_factor=float(whisker_factor),
        conservative=False,
        distances=values,
        threshold=float(hi),
        lower_threshold=float(lo),
    )


def classify(box):
    """Boolean outlier flag per member of the boxplot's sample."""
    return box.flags()


def classify_amplitude(aligned, box):
    return classify(box)


def classify_phase(aligned, box):
    return classify(box)


def classify_translation(sample, box):
    return classify(box)


@dataclass(frozen=True)
class ReportConfig:
    """Options of :func:`full_report`."""

    lambda_: float = 0.5
    whisker_factor: float = 1.5
    conservative: bool = False
    translation: str = "mean"
    max_step: int = fda.MAX_STEP


REPORT_COLUMNS = (
    "index",
    "translation",
    "amplitude_distance",
    "phase_distance",
    "translation_outlier",
    "amplitude_outlier",
    "phase_outlier",
    "outlier",
)


@dataclass(frozen=True, eq=False)
class OutlierReport:
    """Per-sample verdicts of the three component boxplots."""

    n_samples: int
    translation: np.ndarray
    amplitude_distance: np.ndarray
    phase_distance: np.ndarray
    translation_outlier: np.ndarray
    amplitude_outlier: np.ndarray
    phase_outlier: np.ndarray
    boxplots: dict = field(default_factory=dict)
    notes: tuple = ()

    def __post_init__(self):
        for name in REPORT_COLUMNS[1:-1]:
            if len(getattr(self, name)) != self.n_samples:
                raise ValueError(f"report column {name} has the wrong length")

    @property
    def outlier(self):
        return self.translation_outlier | self.amplitude_outlier | self.phase_outlier

    def flagged(self, component=None):
        flags = self.outlier if component is None else getattr(self, f"{component}_outlier")
        return [int(i) for i in np.flatnonzero(flags)]

    def rows(self):
        out = self.outlier
        for i in range(self.n_samples):
            yield (
                i,
                float(self.translation[i]),
                float(self.amplitude_distance[i]),
                float(self.phase_distance[i]),
                bool(self.translation_outlier[i]),
                bool(self.amplitude_outlier[i]),
                bool(self.phase_outlier[i]),
                bool(out[i]),
            )

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows():
            writer.writerow(
                [row[0]] + [f"{v:.17g}" for v in row[1:4]] + [int(v) for v in row[4:]]
            )
        return buf.getvalue()

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "outliers": {
                "translation": self.flagged("translation"),
                "amplitude": self.flagged("amplitude"),
                "phase": self.flagged("phase"),
                "any": self.flagged(),
            },
            "boxplots": {k: v.to_dict() for k, v in self.boxplots.items()},
            "notes": list(self.notes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def merge_reports(reports):
    """Combine reports of several coordinates: a member is flagged in a
    component when any coordinate flags it; distances are taken from the
    coordinate with the largest value."""
    first = reports[0]
    if any(r.n_samples != first.n_samples for r in reports):
        raise ValueError("reports cover different sample sizes")

    def stack(name, how):
        return how(np.array([getattr(r, name) for r in reports]), axis=0)

    return OutlierReport(
        n_samples=first.n_samples,
        translation=stack("translation", np.max),
        amplitude_distance=stack("amplitude_distance", np.max),
        phase_distance=stack("phase_distance", np.max),
        translation_outlier=stack("translation_outlier", np.any),
        amplitude_outlier=stack("amplitude_outlier", np.any),
        phase_outlier=stack("phase_outlier", np.any),
        notes=tuple(n for r in reports for n in r.notes),
    )


def full_report(sample, config=None, aligned=None):
    """Translation, amplitude and phase verdicts for a sample of functions.

    Parameters
    ----------
    sample : list of SampledFunction
    config : ReportConfig, optional
    aligned : AlignedSample, optional
        Reuse an existing alignment of the translation-centred sample.
    """
    config = config or ReportConfig()
    n = len(sample)
    _check_size(n)
    fda._check_grid(*sample)
    shift = translation_values(sample, config.translation)
    centred = [fda.SampledFunction(f.values - c) for f, c in zip(sample, shift)]
    if aligned is None:
        aligned = fda.align_sample(centred, max_step=config.max_step)
    t_box = translation_boxplot(shift, config.whisker_factor)
    a_box = amplitude_boxplot(aligned, config.lambda_, config.whisker_factor, config.conservative)
    p_box = phase_boxplot(aligned, config.lambda_, config.whisker_factor, config.conservative)
    notes = []
    if aligned.warning:
        notes.append(aligned.warning)
    if not all(p_box.whiskers_invertible):
        notes.append("phase whisker ends leave the positive orthant and are not warps")
    return OutlierReport(
        n_samples=n,
        translation=shift,
        amplitude_distance=a_box.distances,
        phase_distance=p_box.distances,
        translation_outlier=classify(t_box),
        amplitude_outlier=classify(a_box),
        phase_outlier=classify(p_box),
        boxplots={"translation": t_box, "amplitude": a_box, "phase": p_box},
        notes=tuple(notes),
    )
