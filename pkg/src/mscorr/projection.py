"""Colour projection of spectral cubes into RGB, XYZ and CIE L*a*b*.

RGB is a plain linear projection through camera sensitivities (no display
gamma).  XYZ is scaled by ``k`` so that the reference white has ``Y = 100``;
without a measured white a flat spectrum at the 8-bit maximum stands in.

L*a*b* on XYZ derived from 8-bit samples is computed anyway, although its
precision is limited by the 8-bit input.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .arith import PLAIN, Arith, Phase
from .errors import AxisMismatch, DegenerateWhite, InvariantViolation
from .spectral import SensitivityKind, SensitivitySet, SpectralImage

FLAT_WHITE_LEVEL = 255.0


class Space(str, Enum):
    RGB = "RGB"
    XYZ = "XYZ"
    LAB = "LAB"


@dataclass(frozen=True, eq=False)
class TriImage:
    values: NDArray[np.float64]  # (height, width, 3)
    space: Space

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvariantViolation(f"tri-image values must be (height, width, 3), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvariantViolation("tri-image values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "space", Space(self.space))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class XyzNormalization:
    """Scale ``k = 100 / white_luminance`` applied to raw tristimulus sums.

    The kernel evaluates ``(raw / white_luminance) * 100`` so that projecting the
    white itself yields ``Y == 100`` bit-exactly.
    """

    white_luminance: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.white_luminance) or self.white_luminance <= 0:
            raise DegenerateWhite(
                f"white luminance must be finite and positive, got {self.white_luminance}"
            )

    @property
    def k(self) -> float:
        return 100.0 / self.white_luminance


@dataclass(frozen=True, eq=False)
class ReferenceWhite:
    Xn: float
    Yn: float
    Zn: float
    source_spectrum: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        for name in ("Xn", "Yn", "Zn"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise DegenerateWhite(f"reference white {name} must be positive, got {v}")
        if self.source_spectrum is not None:
            s = np.array(self.source_spectrum, dtype=np.float64)
            s.flags.writeable = False
            object.__setattr__(self, "source_spectrum", s)

    @property
    def xyz(self) -> NDArray[np.float64]:
        return np.array([self.Xn, self.Yn, self.Zn])


# ---------------------------------------------------------------------------
# kernels on (pixels, bands) arrays


def project_kernel(ar: Arith, spectra, rows) -> NDArray[np.float64]:
    """Per pixel ``c = sum_l rows[c, l] * s(l)`` as 3N multiplies and 3N accumulates."""
    with ar.stage(Phase.PROJECTION, "weight", parallel=True, per_band=True):
        products = ar.mul(spectra[:, None, :], rows[None, :, :])
    with ar.stage(Phase.PROJECTION, "accumulate", parallel=False, per_band=True):
        return ar.accumulate_last(products)


def xyz_kernel(ar: Arith, spectra, rows, norm: XyzNormalization) -> NDArray[np.float64]:
    raw = project_kernel(ar, spectra, rows)
    with ar.stage(Phase.PROJECTION, "normalize", parallel=True):
        return ar.mul(ar.div(raw, norm.white_luminance), 100.0)


def lab_kernel(ar: Arith, xyz, white_xyz) -> NDArray[np.float64]:
    with ar.stage(Phase.PROJECTION, "white-ratio", parallel=True):
        t = ar.div(xyz, white_xyz)
    with ar.stage(Phase.PROJECTION, "cube-root", parallel=True):
        f = ar.lab_f(t)
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    with ar.stage(Phase.PROJECTION, "lab", parallel=True):
        L = ar.sub(ar.mul(fy, 116.0), 16.0)
        a = ar.mul(ar.sub(fx, fy), 500.0)
        b = ar.mul(ar.sub(fy, fz), 200.0)
    return np.stack([L, a, b], axis=-1)


# ---------------------------------------------------------------------------
# image-level operations


def _require(sens: SensitivitySet, kind: SensitivityKind, img: SpectralImage) -> None:
    if sens.kind is not kind:
        raise InvariantViolation(f"expected {kind.value} sensitivities, got {sens.kind.value}")
    sens.check_axis(img.axis)


def _as_tri(img: SpectralImage, flat: np.ndarray, space: Space) -> TriImage:
    return TriImage(flat.reshape(img.height, img.width, 3), space)


def project_rgb(img: SpectralImage, sens: SensitivitySet, ar: Arith = PLAIN) -> TriImage:
    _require(sens, SensitivityKind.CAMERA_RGB, img)
    return _as_tri(img, project_kernel(ar, img.spectra(), sens.rows), Space.RGB)


def xyz_scale(cmf: SensitivitySet, white=None) -> XyzNormalization:
    """Normalization putting ``Y = 100`` on ``white`` (flat 255 when absent)."""
    ybar = cmf.rows[1]
    if white is None:
        w = np.full(ybar.shape, FLAT_WHITE_LEVEL)
    else:
        w = np.asarray(white, dtype=np.float64)
        if w.shape != ybar.shape:
            raise AxisMismatch(f"white spectrum has {w.size} bands, CMF has {ybar.size}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DegenerateWhite("white spectrum must be finite and nonnegative")
    # same product order and accumulation as project_kernel
    denom = float(PLAIN.accumulate_last(w * ybar))
    if denom <= 0:
        raise DegenerateWhite("white spectrum has no luminance under the CMF")
    return XyzNormalization(denom)


def project_xyz(
    img: SpectralImage, cmf: SensitivitySet, white=None, ar: Arith = PLAIN
) -> tuple[TriImage, XyzNormalization]:
    _require(sens=cmf, kind=SensitivityKind.CMF_XYZ, img=img)
    norm = xyz_scale(cmf, white)
    xyz = xyz_kernel(ar, img.spectra(), cmf.rows, norm)
    return _as_tri(img, xyz, Space.XYZ), norm


def reference_white(cmf: SensitivitySet, spectrum=None) -> ReferenceWhite:
    """White point of ``spectrum`` (or the flat 8-bit maximum) with ``Yn = 100``."""
    norm = xyz_scale(cmf, spectrum)
    source = np.full(cmf.axis.count, FLAT_WHITE_LEVEL) if spectrum is None else np.asarray(
        spectrum, dtype=np.float64
    )
    X, Y, Z = xyz_kernel(PLAIN, source[None, :], cmf.rows, norm)[0]
    return ReferenceWhite(float(X), float(Y), float(Z), None if spectrum is None else source)


def xyz_to_lab(img: TriImage, white: ReferenceWhite, ar: Arith = PLAIN) -> TriImage:
    if img.space is not Space.XYZ:
        raise InvariantViolation(f"xyz_to_lab needs an XYZ image, got {img.space.value}")
    lab = lab_kernel(ar, img.values.reshape(-1, 3), white.xyz)
    return TriImage(lab.reshape(img.values.shape), Space.LAB)
