"""Spectral distance metrics: RMS, WRMS, GFC, ΔE(RGB), ΔE*ab and Mv.

Each metric has a kernel operating on ``(pixels, bands)`` float arrays through
an :class:`~mscorr.arith.Arith` backend, a scalar form on a single spectrum
pair where that makes sense, and an image form returning a
:class:`DistanceResult` whose aggregate is the mean of the per-pixel values.

Per-pixel work can be split across threads.  Kernels are elementwise along
the pixel axis and the aggregate is reduced in a fixed pairwise order, so the
result is bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .arith import PLAIN, Arith, Numeric, Phase, tree_sum
from .errors import (
    AxisMismatch,
    DimensionMismatch,
    InvariantViolation,
    MissingConfig,
    WeightLengthMismatch,
    ZeroSpectrum,
)
from .projection import (
    ReferenceWhite,
    XyzNormalization,
    lab_kernel,
    project_kernel,
    reference_white,
    xyz_kernel,
    xyz_scale,
)
from .spectral import SensitivityKind, SensitivitySet, SpectralImage, WavelengthAxis

GFC_CLAMP_TOL = 1e-12
MV_EPSILON = 1.0
WEIGHT_SUM_TOL = 1e-12


class Metric(str, Enum):
    RMS = "RMS"
    WRMS = "WRMS"
    GFC = "GFC"
    DE_RGB = "DE_RGB"
    DE_LAB = "DE_LAB"
    MV = "MV"

    @classmethod
    def parse(cls, name: str | Metric) -> Metric:
        if isinstance(name, Metric):
            return name
        key = str(name).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown metric {name!r}") from None

    @property
    def polarity(self) -> Polarity:
        return Polarity.SIMILARITY if self is Metric.GFC else Polarity.DISTANCE

    @property
    def cli_name(self) -> str:
        return self.value.lower().replace("_", "-")


class Polarity(str, Enum):
    DISTANCE = "DISTANCE"  # 0 means identical
    SIMILARITY = "SIMILARITY"  # 1 means identical


@dataclass(frozen=True, eq=False)
class SpectrumPair:
    s1: NDArray[np.float64]
    s2: NDArray[np.float64]
    axis: WavelengthAxis | None = None

    def __post_init__(self) -> None:
        s1 = np.array(self.s1, dtype=np.float64).ravel()
        s2 = np.array(self.s2, dtype=np.float64).ravel()
        if s1.shape != s2.shape:
            raise DimensionMismatch(f"spectra differ in length: {s1.size} vs {s2.size}")
        if s1.size < 1:
            raise InvariantViolation("spectra must have at least one band")
        if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
            raise InvariantViolation("spectra must be finite")
        if self.axis is not None and self.axis.count != s1.size:
            raise AxisMismatch(f"axis has {self.axis.count} bands, spectra have {s1.size}")
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)

    @property
    def bands(self) -> int:
        return self.s1.size


@dataclass(frozen=True, eq=False)
class WeightVector:
    w: NDArray[np.float64]

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=np.float64).ravel()
        if w.size < 1 or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvariantViolation("weights must be finite and nonnegative")
        if abs(float(np.sum(w)) - 1.0) > WEIGHT_SUM_TOL:
            raise InvariantViolation(f"weights must sum to 1, got {float(np.sum(w))!r}")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @classmethod
    def normalized(cls, raw) -> WeightVector:
        raw = np.asarray(raw, dtype=np.float64).ravel()
        total = float(np.sum(raw))
        if not np.isfinite(total) or total <= 0:
            raise InvariantViolation("weights must have a positive sum")
        return cls(raw / total)

    @classmethod
    def uniform(cls, n: int) -> WeightVector:
        return cls(np.full(n, 1.0 / n))

    def select(self, indices: Sequence[int]) -> WeightVector:
        return WeightVector.normalized(self.w[list(indices)])


@dataclass(frozen=True, eq=False)
class DistanceResult:
    metric: Metric
    per_pixel: NDArray[np.float64]  # (height, width)
    aggregate: float
    polarity: Polarity


# ---------------------------------------------------------------------------
# kernels


def rms_kernel(ar: Arith, a, b):
    n = a.shape[-1]
    with ar.stage(Phase.DISTANCE, "difference", parallel=True, numeric=Numeric.INTEGER, per_band=True):
        d = ar.sub(a, b)
    with ar.stage(Phase.DISTANCE, "square", parallel=True, numeric=Numeric.INTEGER, per_band=True):
        sq = ar.mul(d, d)
    with ar.stage(Phase.DISTANCE, "accumulate", parallel=False, numeric=Numeric.INTEGER):
        s = ar.sum_last(sq)
    with ar.stage(Phase.DISTANCE, "mean-root", parallel=False):
        mean = ar.shift_div(s, n.bit_length() - 1) if n & (n - 1) == 0 else ar.div(s, float(n))
        return ar.sqrt(mean)


def wrms_kernel(ar: Arith, a, b, w):
    with ar.stage(Phase.DISTANCE, "difference", parallel=True, numeric=Numeric.INTEGER, per_band=True):
        d = ar.sub(a, b)
    with ar.stage(Phase.DISTANCE, "square", parallel=True, numeric=Numeric.INTEGER, per_band=True):
        sq = ar.mul(d, d)
    with ar.stage(Phase.DISTANCE, "weight", parallel=True, per_band=True):
        wsq = ar.mul(sq, w)
    with ar.stage(Phase.DISTANCE, "accumulate", parallel=False):
        s = ar.sum_last(wsq)
    with ar.stage(Phase.DISTANCE, "root", parallel=False):
        return ar.sqrt(s)


def _check_nonzero(a, b) -> None:
    dead = np.count_nonzero(~np.any(a != 0, axis=-1)) + np.count_nonzero(~np.any(b != 0, axis=-1))
    if dead:
        raise ZeroSpectrum(f"{dead} zero spectra; GFC is undefined for them")


def gfc_kernel(ar: Arith, a, b):
    _check_nonzero(a, b)
    with ar.stage(Phase.DISTANCE, "cross", parallel=True, numeric=Numeric.INTEGER, per_band=True):
        ab = ar.mul(a, b)
    with ar.stage(Phase.DISTANCE, "cross-sum", parallel=False, numeric=Numeric.INTEGER):
        dot = ar.sum_last(ab)
    with ar.stage(Phase.DISTANCE, "power", parallel=True, numeric=Numeric.INTEGER, per_band=True):
        aa = ar.mul(a, a)
        bb = ar.mul(b, b)
    with ar.stage(Phase.DISTANCE, "power-sum", parallel=True, numeric=Numeric.INTEGER):
        na = ar.sum_last(aa)
        nb = ar.sum_last(bb)
    # sqrt(na*nb) rather than sqrt(na)*sqrt(nb): identical spectra then give exactly 1
    with ar.stage(Phase.DISTANCE, "norm", parallel=True):
        denom = ar.sqrt(ar.mul(na, nb))
    with ar.stage(Phase.DISTANCE, "ratio", parallel=False):
        r = ar.div(np.abs(dot), denom)
    over = r - 1.0
    if np.any(over > GFC_CLAMP_TOL):
        raise ArithmeticError(f"GFC overshoot {float(over.max())!r} exceeds round-off")
    return np.minimum(r, 1.0)


def euclid3_kernel(ar: Arith, p, q):
    """ΔE between two ``(pixels, 3)`` colour arrays."""
    with ar.stage(Phase.DISTANCE, "difference", parallel=True):
        d = ar.sub(p, q)
    with ar.stage(Phase.DISTANCE, "square", parallel=True):
        sq = ar.mul(d, d)
    with ar.stage(Phase.DISTANCE, "accumulate", parallel=True):
        s = ar.sum_last(sq)
    with ar.stage(Phase.DISTANCE, "root", parallel=True):
        return ar.sqrt(s)


def de_rgb_kernel(ar: Arith, a, b, rows):
    return euclid3_kernel(ar, project_kernel(ar, a, rows), project_kernel(ar, b, rows))


def de_lab_kernel(ar: Arith, a, b, rows, norm: XyzNormalization, white_xyz):
    lab1 = lab_kernel(ar, xyz_kernel(ar, a, rows, norm), white_xyz)
    lab2 = lab_kernel(ar, xyz_kernel(ar, b, rows, norm), white_xyz)
    return euclid3_kernel(ar, lab1, lab2)


def lab_gradients(rows, norm: XyzNormalization, white_xyz) -> NDArray[np.float64]:
    """``d(X/Xn, Y/Yn, Z/Zn) / ds(λ)``, shape ``(3, bands)``; constant per configuration."""
    return (rows / norm.white_luminance) * 100.0 / np.asarray(white_xyz)[:, None]


def mv_weights(ar: Arith, oi, rows, norm: XyzNormalization, white_xyz):
    """Sensitivities of L*, a*, b* to each OI band, shape ``(pixels, 3, bands)``."""
    g = lab_gradients(rows, norm, white_xyz)
    xyz = xyz_kernel(ar, oi, rows, norm)
    with ar.stage(Phase.PROJECTION, "white-ratio", parallel=True):
        t = ar.div(xyz, white_xyz)
    with ar.stage(Phase.PROJECTION, "cube-root-slope", parallel=True):
        fp = ar.lab_fprime(t)
    with ar.stage(Phase.PROJECTION, "weight-coefficients", parallel=True):
        c_l = ar.mul(fp[:, 1:2], 116.0)
        c_ax = ar.mul(fp[:, 0:1], 500.0)
        c_ay = ar.mul(fp[:, 1:2], 500.0)
        c_by = ar.mul(fp[:, 1:2], 200.0)
        c_bz = ar.mul(fp[:, 2:3], 200.0)
    with ar.stage(Phase.PROJECTION, "weights", parallel=True, per_band=True):
        w_l = ar.mul(c_l, g[1])
        w_a = ar.sub(ar.mul(c_ax, g[0]), ar.mul(c_ay, g[1]))
        w_b = ar.sub(ar.mul(c_by, g[1]), ar.mul(c_bz, g[2]))
    return np.stack([w_l, w_a, w_b], axis=1)


def mv_kernel(ar: Arith, oi, ci, rows, norm: XyzNormalization, white_xyz):
    w = mv_weights(ar, oi, rows, norm, white_xyz)
    with ar.stage(Phase.DISTANCE, "ratio", parallel=True, per_band=True):
        delta = ar.sub(ar.div(ci, np.maximum(oi, MV_EPSILON)), 1.0)
    with ar.stage(Phase.DISTANCE, "shift", parallel=True, per_band=True):
        u = ar.mul(oi, delta)
        terms = ar.mul(w, u[:, None, :])
    with ar.stage(Phase.DISTANCE, "square", parallel=True, per_band=True):
        sq = ar.mul(terms, terms)
    with ar.stage(Phase.DISTANCE, "channel-sum", parallel=True, per_band=True):
        e2 = ar.add(ar.add(sq[:, 0], sq[:, 1]), sq[:, 2])
    with ar.stage(Phase.DISTANCE, "band-root", parallel=True, per_band=True):
        e = ar.sqrt(e2)
    with ar.stage(Phase.DISTANCE, "band-square", parallel=True, per_band=True):
        ee = ar.mul(e, e)
    with ar.stage(Phase.DISTANCE, "accumulate", parallel=False):
        m = ar.mean_last(ee)
    with ar.stage(Phase.DISTANCE, "root", parallel=False):
        return ar.sqrt(m)


# ---------------------------------------------------------------------------
# scalar forms


def rms(p: SpectrumPair) -> float:
    return float(rms_kernel(PLAIN, p.s1[None], p.s2[None])[0])


def wrms(p: SpectrumPair, w: WeightVector) -> float:
    if w.w.size != p.bands:
        raise WeightLengthMismatch(f"{w.w.size} weights for {p.bands} bands")
    return float(wrms_kernel(PLAIN, p.s1[None], p.s2[None], w.w)[0])


def gfc(p: SpectrumPair) -> float:
    return float(gfc_kernel(PLAIN, p.s1[None], p.s2[None])[0])


# ---------------------------------------------------------------------------
# image forms


def check_pair(img1: SpectralImage, img2: SpectralImage) -> None:
    if img1.samples.shape != img2.samples.shape:
        raise DimensionMismatch(
            f"image shapes differ: {img1.width}x{img1.height}x{img1.bands} "
            f"vs {img2.width}x{img2.height}x{img2.bands}"
        )
    if img1.axis.wavelengths() != img2.axis.wavelengths():
        raise AxisMismatch("images are sampled on different wavelength axes")


def per_pixel(kernel: Callable, a, b, *args, workers: int = 1, ar: Arith = PLAIN):
    """Run ``kernel(ar, a, b, *args)`` over contiguous pixel chunks."""
    workers = max(1, int(workers))
    n = a.shape[0]
    if workers == 1 or n < 2:
        return kernel(ar, a, b, *args)
    bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda c: kernel(ar, a[c[0] : c[1]], b[c[0] : c[1]], *args), chunks))
    return np.concatenate(parts)


def _result(metric: Metric, img: SpectralImage, values) -> DistanceResult:
    values = np.asarray(values, dtype=np.float64)
    agg = tree_sum(values) / values.size
    return DistanceResult(metric, values.reshape(img.height, img.width), agg, metric.polarity)


def _require_kind(sens: SensitivitySet, kind: SensitivityKind, img: SpectralImage) -> None:
    if sens.kind is not kind:
        raise InvariantViolation(f"expected {kind.value} sensitivities, got {sens.kind.value}")
    sens.check_axis(img.axis)


def rms_image(img1, img2, *, workers: int = 1) -> DistanceResult:
    check_pair(img1, img2)
    v = per_pixel(rms_kernel, img1.spectra(), img2.spectra(), workers=workers)
    return _result(Metric.RMS, img1, v)


def wrms_image(img1, img2, w: WeightVector, *, workers: int = 1) -> DistanceResult:
    check_pair(img1, img2)
    if w.w.size != img1.bands:
        raise WeightLengthMismatch(f"{w.w.size} weights for {img1.bands} bands")
    v = per_pixel(wrms_kernel, img1.spectra(), img2.spectra(), w.w, workers=workers)
    return _result(Metric.WRMS, img1, v)


def gfc_image(img1, img2, *, workers: int = 1) -> DistanceResult:
    check_pair(img1, img2)
    v = per_pixel(gfc_kernel, img1.spectra(), img2.spectra(), workers=workers)
    return _result(Metric.GFC, img1, v)


def de_rgb(img1, img2, sens: SensitivitySet, *, workers: int = 1) -> DistanceResult:
    check_pair(img1, img2)
    _require_kind(sens, SensitivityKind.CAMERA_RGB, img1)
    v = per_pixel(de_rgb_kernel, img1.spectra(), img2.spectra(), sens.rows, workers=workers)
    return _result(Metric.DE_RGB, img1, v)


def _lab_setup(img, cmf: SensitivitySet, white: ReferenceWhite):
    _require_kind(cmf, SensitivityKind.CMF_XYZ, img)
    return xyz_scale(cmf, white.source_spectrum), white.xyz


def de_lab(img1, img2, cmf: SensitivitySet, white: ReferenceWhite, *, workers: int = 1) -> DistanceResult:
    check_pair(img1, img2)
    norm, wxyz = _lab_setup(img1, cmf, white)
    v = per_pixel(de_lab_kernel, img1.spectra(), img2.spectra(), cmf.rows, norm, wxyz, workers=workers)
    return _result(Metric.DE_LAB, img1, v)


def mv(img1, img2, cmf: SensitivitySet, white: ReferenceWhite, *, workers: int = 1) -> DistanceResult:
    """Mv of candidate ``img2`` against original ``img1``; not symmetric."""
    check_pair(img1, img2)
    norm, wxyz = _lab_setup(img1, cmf, white)
    v = per_pixel(mv_kernel, img1.spectra(), img2.spectra(), cmf.rows, norm, wxyz, workers=workers)
    return _result(Metric.MV, img1, v)


# ---------------------------------------------------------------------------
# dispatch


@dataclass(frozen=True)
class MetricConfig:
    """Per-metric inputs; which fields are needed depends on the metric."""

    weights: WeightVector | None = None
    sensitivities: SensitivitySet | None = None  # camera RGB
    cmf: SensitivitySet | None = None
    white: ReferenceWhite | None = None
    workers: int = 1

    def require(self, metric: Metric) -> None:
        """Raise :class:`MissingConfig` naming the first absent input."""
        need = {
            Metric.WRMS: [("weights", "--weights")],
            Metric.DE_RGB: [("sensitivities", "--sens")],
            Metric.DE_LAB: [("cmf", "--sens"), ("white", "--white")],
            Metric.MV: [("cmf", "--sens"), ("white", "--white")],
        }.get(metric, [])
        for attr, flag in need:
            if getattr(self, attr) is None:
                raise MissingConfig(flag)

    def select(self, indices: Sequence[int]) -> MetricConfig:
        """Configuration restricted to the bands at ``indices``.

        A white without a source spectrum is treated as the flat fallback and
        recomputed on the reduced CMF.
        """
        idx = list(indices)
        cmf = self.cmf.select(idx) if self.cmf is not None else None
        white = self.white
        if white is not None and cmf is not None:
            src = white.source_spectrum
            white = reference_white(cmf, None if src is None else src[idx])
        return replace(
            self,
            weights=self.weights.select(idx) if self.weights is not None else None,
            sensitivities=self.sensitivities.select(idx) if self.sensitivities is not None else None,
            cmf=cmf,
            white=white,
        )


def image_metric(
    metric: Metric | str, img1: SpectralImage, img2: SpectralImage, config: MetricConfig | None = None
) -> DistanceResult:
    metric = Metric.parse(metric)
    config = config or MetricConfig()
    config.require(metric)
    w = config.workers
    if metric is Metric.RMS:
        return rms_image(img1, img2, workers=w)
    if metric is Metric.WRMS:
        return wrms_image(img1, img2, config.weights, workers=w)
    if metric is Metric.GFC:
        return gfc_image(img1, img2, workers=w)
    if metric is Metric.DE_RGB:
        return de_rgb(img1, img2, config.sensitivities, workers=w)
    if metric is Metric.DE_LAB:
        return de_lab(img1, img2, config.cmf, config.white, workers=w)
    return mv(img1, img2, config.cmf, config.white, workers=w)
