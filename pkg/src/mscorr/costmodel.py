"""Operation counts, parallelism and latency for the six distance metrics.

Two sources of counts exist side by side:

* ``PAPER_TABLE3`` profiles transcribe the published per-pixel operation table
  with its literal 400 bands replaced by ``N``.  Rows follow the printed
  tokens, including the ``3 x`` white scaling of ΔE*ab.  GFC's two roots are
  read as one per norm.
* ``DERIVED_COUNTER`` profiles come from running the real metric kernels
  through :class:`~mscorr.arith.CountingArith`.

The two are reported next to each other and never reconciled.

Latency model: a parallel stage issues all lanes in one cycle, and a serial
stage issues one op per cycle.  SQRT, CBRT and DIV add a configurable latency
on top of that.  The cycle count divided by the processing clock gives
microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .arith import CountingArith, Numeric, Op, Phase
from .errors import UnknownAlgorithm
from .metrics import (
    Metric,
    MetricConfig,
    WeightVector,
    de_lab_kernel,
    de_rgb_kernel,
    gfc_kernel,
    mv_kernel,
    rms_kernel,
    wrms_kernel,
    check_pair,
)
from .projection import reference_white, xyz_scale
from .spectral import SensitivityKind, SensitivitySet, SpectralImage, WavelengthAxis

MAX_TABLE_BANDS = 400


class Source(str, Enum):
    PAPER_TABLE3 = "PAPER_TABLE3"
    DERIVED_COUNTER = "DERIVED_COUNTER"


@dataclass(frozen=True)
class Stage:
    op: Op
    count: int
    numeric: Numeric
    parallel: bool
    name: str = ""
    per_band: bool = False

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError(f"stage count must be nonnegative, got {self.count}")


@dataclass(frozen=True)
class OpProfile:
    stages: tuple[Stage, ...] = ()

    def totals(self) -> dict[Op, int]:
        out: dict[Op, int] = {}
        for st in self.stages:
            out[st.op] = out.get(st.op, 0) + st.count
        return out

    def __add__(self, other: OpProfile) -> OpProfile:
        return OpProfile(self.stages + other.stages)


@dataclass(frozen=True)
class ClockModel:
    f_control: float = 150.0  # MHz
    f_acquisition: float = 77.0
    f_storage: float = 100.0
    f_processing: float = 50.0

    def __post_init__(self) -> None:
        for name in ("f_control", "f_acquisition", "f_storage", "f_processing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class LatencyModel:
    """Extra cycles of the long operations; invented model parameters."""

    sqrt_latency: int = 16
    cbrt_latency: int = 32
    div_latency: int = 16

    def extra(self, op: Op) -> int:
        return {Op.SQRT: self.sqrt_latency, Op.CBRT: self.cbrt_latency, Op.DIV: self.div_latency}.get(
            op, 0
        )


@dataclass(frozen=True)
class CostReport:
    algorithm: Metric | str
    bands: int
    projection_ops: OpProfile
    distance_ops: OpProfile
    source: Source
    cycles: int | None = None
    latency_us: float | None = None
    clocks: ClockModel | None = None
    latency: LatencyModel | None = None

    @property
    def profile(self) -> OpProfile:
        return self.projection_ops + self.distance_ops

    def totals(self) -> dict[Op, int]:
        return self.profile.totals()


# ---------------------------------------------------------------------------
# published table


def _st(op, count, numeric, parallel, per_band=False, name=""):
    return Stage(Op(op), count, Numeric(numeric), parallel, name=name, per_band=per_band)


I, F = Numeric.INTEGER, Numeric.FLOAT


def _rgb_projection(n: int) -> list[Stage]:
    # projection columns carry no type or parallelism entries; multiplies are
    # lane-parallel, the running sum over bands is serial
    return [_st(Op.MUL, 3 * n, I, True, True, "weight"), _st(Op.ADD, 3 * n, I, False, True, "accumulate")]


def _xyz_projection(n: int) -> list[Stage]:
    return [_st(Op.MUL, 3 * n, F, True, True, "weight"), _st(Op.ADD, 3 * n, F, False, True, "accumulate")]


def _published_rows(metric: Metric, n: int) -> tuple[list[Stage], list[Stage]]:
    if metric is Metric.RMS:
        return [], [
            _st(Op.SUB, n, I, True, True),
            _st(Op.ADD, n, I, False, True),
            _st(Op.MUL, 1, F, False),
        ]
    if metric is Metric.WRMS:
        return [], [
            _st(Op.SUB, n, I, True, True),
            _st(Op.MUL, n, F, True, True),
            _st(Op.MUL, n, F, True, True),
            _st(Op.ADD, n, F, False, True),
            _st(Op.MUL, 1, F, False),
            _st(Op.SQRT, 1, F, False),
        ]
    if metric is Metric.GFC:
        return [], [
            _st(Op.MUL, n, I, True, True),
            _st(Op.ADD, n, I, False, True),
            _st(Op.MUL, 2 * n, I, True, True),
            _st(Op.ADD, 2 * n, I, True, True),
            _st(Op.SQRT, 2, F, True),  # one root per norm, not per band
            _st(Op.MUL, 1, F, False),
        ]
    if metric is Metric.DE_RGB:
        return _rgb_projection(n), [
            _st(Op.SUB, 3 * n, I, True, True),
            _st(Op.MUL, 3 * n, I, True, True),
            _st(Op.ADD, 2 * n, I, True, True),
            _st(Op.SQRT, n, F, True, True),
        ]
    if metric is Metric.DE_LAB:
        return _xyz_projection(n) + [
            _st(Op.MUL, 3, F, True, name="white-ratio"),  # printed "3 x", not "3 /"
            _st(Op.CBRT, 3, F, True, name="cube-root"),
        ], [
            _st(Op.SUB, 3 * n, F, True, True),
            _st(Op.MUL, 3 * n, F, True, True),
            _st(Op.ADD, 2 * n, F, True, True),
            _st(Op.SQRT, n, F, True, True),
        ]
    if metric is Metric.MV:
        return _xyz_projection(n) + [
            _st(Op.DIV, 3, F, True, name="white-ratio"),
            _st(Op.CBRT, 3, F, True, name="cube-root"),
        ], [
            _st(Op.SUB, n, I, True, True),
            _st(Op.DIV, 3 * n, F, True, True),
            _st(Op.MUL, 3 * n, F, True, True),
            _st(Op.ADD, 2 * n, F, True, True),
            _st(Op.SQRT, n, F, True, True),
            _st(Op.MUL, n, F, True, True),
            _st(Op.ADD, n, F, False, True),
        ]
    raise UnknownAlgorithm(f"no published profile for {metric!r}")


def paper_profile(algorithm: Metric | str, n: int) -> CostReport:
    try:
        metric = Metric.parse(algorithm)
    except ValueError:
        raise UnknownAlgorithm(f"unknown algorithm {algorithm!r}") from None
    if not 1 <= n <= MAX_TABLE_BANDS:
        raise ValueError(f"band count {n} outside 1..{MAX_TABLE_BANDS}")
    proj, dist = _published_rows(metric, n)
    return CostReport(metric, n, OpProfile(tuple(proj)), OpProfile(tuple(dist)), Source.PAPER_TABLE3)


# ---------------------------------------------------------------------------
# instrumented counts


def measured_profile(
    algorithm: Metric | str, img1: SpectralImage, img2: SpectralImage, config: MetricConfig | None = None
) -> CostReport:
    """Per-pixel operation totals recorded while actually running the metric."""
    metric = Metric.parse(algorithm)
    config = config or MetricConfig()
    config.require(metric)
    check_pair(img1, img2)
    a, b = img1.spectra(), img2.spectra()
    ar = CountingArith(img1.pixels)
    if metric is Metric.RMS:
        rms_kernel(ar, a, b)
    elif metric is Metric.WRMS:
        wrms_kernel(ar, a, b, config.weights.w)
    elif metric is Metric.GFC:
        gfc_kernel(ar, a, b)
    elif metric is Metric.DE_RGB:
        config.sensitivities.check_axis(img1.axis)
        de_rgb_kernel(ar, a, b, config.sensitivities.rows)
    else:
        config.cmf.check_axis(img1.axis)
        norm = xyz_scale(config.cmf, config.white.source_spectrum)
        kernel = de_lab_kernel if metric is Metric.DE_LAB else mv_kernel
        kernel(ar, a, b, config.cmf.rows, norm, config.white.xyz)
    proj: list[Stage] = []
    dist: list[Stage] = []
    for (tag, op), count in ar.counts.items():
        st = Stage(op, count, tag.numeric, tag.parallel, name=tag.name, per_band=tag.per_band)
        (proj if tag.phase is Phase.PROJECTION else dist).append(st)
    return CostReport(metric, img1.bands, OpProfile(tuple(proj)), OpProfile(tuple(dist)), Source.DERIVED_COUNTER)


def synthetic_config(metric: Metric | str, axis: WavelengthAxis, seed: int = 0) -> MetricConfig:
    """Arbitrary but valid metric inputs on ``axis``; counts do not depend on them."""
    rng = np.random.default_rng(seed)
    rows = rng.uniform(0.05, 1.0, size=(3, axis.count))
    cmf = SensitivitySet(axis, rows, SensitivityKind.CMF_XYZ)
    return MetricConfig(
        weights=WeightVector.normalized(rng.uniform(0.1, 1.0, axis.count)),
        sensitivities=SensitivitySet(axis, rows, SensitivityKind.CAMERA_RGB),
        cmf=cmf,
        white=reference_white(cmf),
    )


def measured_profile_for_bands(algorithm: Metric | str, n: int, seed: int = 0) -> CostReport:
    """Measured profile on a random one-pixel pair with ``n`` bands at 1 nm spacing."""
    axis = WavelengthAxis(380, 1, n)
    rng = np.random.default_rng(seed)
    s = rng.integers(1, 256, size=(2, 1, 1, n), dtype=np.uint8)
    return measured_profile(
        algorithm, SpectralImage(s[0], axis), SpectralImage(s[1], axis), synthetic_config(algorithm, axis, seed)
    )


# ---------------------------------------------------------------------------
# latency


def stage_cycles(stage: Stage, lat: LatencyModel) -> int:
    if stage.count == 0:
        return 0
    extra = lat.extra(stage.op)
    if stage.parallel:
        return 1 + extra
    return stage.count * max(1, extra)


def estimate_latency(
    report: CostReport, clocks: ClockModel | None = None, latency: LatencyModel | None = None
) -> CostReport:
    clocks = clocks or ClockModel()
    latency = latency or LatencyModel()
    cycles = sum(stage_cycles(st, latency) for st in report.profile.stages)
    return replace(
        report, cycles=cycles, latency_us=cycles / clocks.f_processing, clocks=clocks, latency=latency
    )


def single_stage_report(op: Op | str, count: int, *, parallel: bool, name: str = "illustrative") -> CostReport:
    st = Stage(Op(op), count, Numeric.INTEGER, parallel, name=name)
    return CostReport(name, count, OpProfile(), OpProfile((st,)), Source.DERIVED_COUNTER)


# ---------------------------------------------------------------------------
# adaptability ranking

PUBLISHED_ADAPTABILITY = (Metric.RMS, Metric.DE_RGB, Metric.WRMS, Metric.GFC, Metric.DE_LAB, Metric.MV)

OP_PENALTY = {
    Op.ADD: 1.0,
    Op.SUB: 1.0,
    Op.SHIFT_DIV: 1.0,
    Op.MUL: 2.0,
    Op.SQRT: 20.0,
    Op.DIV: 50.0,
    Op.CBRT: 100.0,
}
FLOAT_PENALTY = 4.0


def adaptability_score(report: CostReport, penalty: dict[Op, float] | None = None) -> float:
    """Hardware-unfriendliness: penalty-weighted op counts, float stages scaled up."""
    penalty = penalty or OP_PENALTY
    score = 0.0
    for st in report.profile.stages:
        w = penalty[st.op] * (FLOAT_PENALTY if st.numeric is Numeric.FLOAT else 1.0)
        score += w * st.count
    return score


def adaptability_rank(n: int = MAX_TABLE_BANDS) -> dict[str, list[Metric]]:
    """Published order (most to least adaptable) next to the order by score."""
    scores = {m: adaptability_score(paper_profile(m, n)) for m in Metric}
    computed = sorted(Metric, key=lambda m: (scores[m], PUBLISHED_ADAPTABILITY.index(m)))
    return {"published": list(PUBLISHED_ADAPTABILITY), "computed": computed, "scores": scores}


# Published hardware figures, echoed verbatim in reports and never recomputed.
PUBLISHED_FIGURES = {
    "device": "Xilinx Virtex-4 XC4VLX15 (6144 slices, 32 DSP48)",
    "rgb_projection_utilization": {"slices": "63/6144 (1%)", "flip_flops": "87/12288 (0%)",
                                   "luts": "84/12288 (0%)", "dsp48": "4/32 (12%)"},
    "square_root_utilization": {"slices": "161/6144 (2%)", "flip_flops": "77/12288 (0%)",
                                "luts": "292/12288 (2%)", "gclks": "1/32 (3%)"},
    "processing_reusable_units": {"communication": "33 LUTs / 34 FF", "decode": "12 LUTs / 24 FF",
                                  "control": "42 LUTs / 49 FF", "storage": "48 LUTs / 63 FF",
                                  "interface": "5 LUTs / 4 FF"},
    "reusable_modules": {"control": "278 LUTs / 297 FF", "acquisition": "315 LUTs / 228 FF",
                         "storage": "280 LUTs / 524710 FF"},
    "module_frequencies_mhz": {"control": 150, "acquisition": 77, "storage": 100, "processing": 50},
    "rgb_unit_synthesis_frequency": "186MHz",
    "rgb_processing_module_logic_cells": "364 logic cells",
    "entire_system": "1237/6144 logic cells (20%)",
}
