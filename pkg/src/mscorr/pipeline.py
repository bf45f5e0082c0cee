"""Reference store and the band-escalating authentication loop.

A candidate is compared with a stored original at increasing band counts.
At each level both cubes are subsampled identically and the chosen metric's
aggregate ``R`` is checked against the precision ``P`` with a symmetric
margin.  For a distance metric, ``R <= P - margin`` accepts and
``R >= P + margin`` rejects.  Anything in between escalates to the next
level, and when the schedule runs out the verdict is ``UNDECIDED``.  The
inequalities flip for GFC, where 1 means identical.

Store layout::

    <root>/index.tsv    header "id<TAB>cube<TAB>white<TAB>meta", one row per reference
    <root>/...          cube files (MSC1) and optional white spectra

Relative paths in the index are resolved against ``root``.  The index is
rewritten through a temporary file and ``os.replace``, so readers always see
either the old or the new version.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .arith import is_pow2
from .errors import (
    AxisMismatch,
    DimensionMismatch,
    DuplicateId,
    IndexCorrupt,
    LoadFailure,
    MscorrError,
    ScheduleInvalid,
    UnknownReference,
)
from .metrics import Metric, MetricConfig, Polarity, image_metric
from .projection import reference_white
from .spectral import (
    SpectralImage,
    band_indices,
    load_cube,
    load_spectrum,
    read_cube_header,
    subsample_bands,
)

INDEX_NAME = "index.tsv"
INDEX_HEADER = ("id", "cube", "white", "meta")
DEFAULT_LEVELS = (16, 64, 256)
POW2_METRICS = (Metric.RMS, Metric.WRMS)


class Decision(str, Enum):
    AUTHENTIC = "AUTHENTIC"
    REJECTED = "REJECTED"
    UNDECIDED = "UNDECIDED"


@dataclass(frozen=True)
class ReferenceEntry:
    id: str
    cube: str
    white: str | None = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ReferenceInfo:
    id: str
    width: int
    height: int
    bands: int
    meta: dict


class ReferenceStore:
    def __init__(self, root: str | Path, *, create: bool = True) -> None:
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        elif not self.root.is_dir():
            raise IndexCorrupt(f"store directory {self.root} does not exist")

    @property
    def index_path(self) -> Path:
        return self.root / INDEX_NAME

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.root / path

    def _relative(self, p: str | Path) -> str:
        path = Path(p).resolve()
        try:
            return str(path.relative_to(self.root.resolve()))
        except ValueError:
            return str(path)

    def read_index(self) -> dict[str, ReferenceEntry]:
        if not self.index_path.exists():
            return {}
        lines = self.index_path.read_text(encoding="utf-8").splitlines()
        if not lines or tuple(lines[0].split("\t")) != INDEX_HEADER:
            raise IndexCorrupt(f"{self.index_path}: missing or wrong header")
        out: dict[str, ReferenceEntry] = {}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 4 or not cols[0] or not cols[1]:
                raise IndexCorrupt(f"{self.index_path}:{lineno}: expected 4 columns")
            rid, cube, white, meta = cols
            if rid in out:
                raise IndexCorrupt(f"{self.index_path}:{lineno}: duplicate id {rid!r}")
            try:
                meta_d = json.loads(meta) if meta else {}
            except json.JSONDecodeError as exc:
                raise IndexCorrupt(f"{self.index_path}:{lineno}: bad metadata for {rid!r}") from exc
            out[rid] = ReferenceEntry(rid, cube, white or None, meta_d)
        return out

    def write_index(self, entries: dict[str, ReferenceEntry]) -> None:
        rows = ["\t".join(INDEX_HEADER)]
        for rid in sorted(entries):
            e = entries[rid]
            meta = json.dumps(e.meta, sort_keys=True, separators=(",", ":")) if e.meta else ""
            rows.append("\t".join([e.id, e.cube, e.white or "", meta]))
        tmp = self.index_path.with_name(INDEX_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.index_path)

    def get(self, ref_id: str) -> ReferenceEntry:
        try:
            return self.read_index()[ref_id]
        except KeyError:
            raise UnknownReference(f"no reference with id {ref_id!r}") from None

    def load(self, ref_id: str) -> tuple[SpectralImage, np.ndarray | None]:
        e = self.get(ref_id)
        try:
            img = load_cube(self.resolve(e.cube))
            white = load_spectrum(self.resolve(e.white), img.axis) if e.white else None
        except MscorrError as exc:
            raise IndexCorrupt(f"reference {ref_id!r}: {exc}") from exc
        return img, white


def add_reference(
    store: ReferenceStore,
    ref_id: str,
    cube_path: str | Path,
    white_path: str | Path | None = None,
    meta: dict | None = None,
) -> ReferenceEntry:
    if not ref_id or any(c in ref_id for c in "\t\r\n"):
        raise LoadFailure(f"invalid reference id {ref_id!r}")
    entries = store.read_index()
    if ref_id in entries:
        raise DuplicateId(f"reference id {ref_id!r} already exists")
    try:
        img = load_cube(cube_path)
        if white_path is not None:
            load_spectrum(white_path, img.axis)
    except MscorrError as exc:
        raise LoadFailure(f"{exc.code}: {exc}") from exc
    entry = ReferenceEntry(
        ref_id,
        store._relative(cube_path),
        store._relative(white_path) if white_path is not None else None,
        dict(meta or {}),
    )
    entries[ref_id] = entry
    store.write_index(entries)
    return entry


def list_references(store: ReferenceStore) -> list[ReferenceInfo]:
    out = []
    for rid, e in sorted(store.read_index().items()):
        try:
            width, height, axis = read_cube_header(store.resolve(e.cube))
            if e.white and not store.resolve(e.white).is_file():
                raise LoadFailure(f"white spectrum {e.white} is missing")
        except MscorrError as exc:
            raise IndexCorrupt(f"reference {rid!r}: {exc}") from exc
        out.append(ReferenceInfo(rid, width, height, axis.count, dict(e.meta)))
    return out


# ---------------------------------------------------------------------------
# authentication


@dataclass(frozen=True)
class AuthConfig:
    metric: Metric
    precision: float
    margin: float = 0.0
    band_schedule: tuple[int, ...] | None = None  # None: default levels up to the full count
    metric_config: MetricConfig = field(default_factory=MetricConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if not np.isfinite(self.precision):
            raise ScheduleInvalid("precision must be finite")
        if not (np.isfinite(self.margin) and self.margin >= 0):
            raise ScheduleInvalid("margin must be a nonnegative number")
        if self.band_schedule is not None:
            sched = tuple(int(k) for k in self.band_schedule)
            _validate_schedule(self.metric, sched)
            object.__setattr__(self, "band_schedule", sched)

    def schedule_for(self, bands: int) -> tuple[int, ...]:
        if self.band_schedule is None:
            return default_schedule(self.metric, bands)
        if self.band_schedule[-1] > bands:
            raise ScheduleInvalid(
                f"schedule entry {self.band_schedule[-1]} exceeds the reference's {bands} bands"
            )
        return self.band_schedule


def _validate_schedule(metric: Metric, sched: Sequence[int]) -> None:
    if not sched:
        raise ScheduleInvalid("band schedule is empty")
    if any(k < 1 for k in sched):
        raise ScheduleInvalid("band counts must be positive")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ScheduleInvalid(f"band schedule {list(sched)} is not strictly ascending")
    if metric in POW2_METRICS:
        bad = [k for k in sched if not is_pow2(k)]
        if bad:
            raise ScheduleInvalid(
                f"{metric.value} needs power-of-two band counts; {bad} are not"
            )


def default_schedule(metric: Metric, bands: int) -> tuple[int, ...]:
    top = bands
    if metric in POW2_METRICS and not is_pow2(bands):
        top = 1 << (bands.bit_length() - 1)
    levels = [k for k in DEFAULT_LEVELS if k < top]
    return tuple(levels + [top])


@dataclass(frozen=True)
class AuthVerdict:
    decision: Decision
    iterations: tuple[tuple[int, float], ...]
    final_R: float
    bands_final: int
    metric: Metric
    polarity: Polarity
    precision: float
    margin: float


def decide(r: float, polarity: Polarity, precision: float, margin: float) -> Decision | None:
    if polarity is Polarity.DISTANCE:
        if r <= precision - margin:
            return Decision.AUTHENTIC
        if r >= precision + margin:
            return Decision.REJECTED
    else:
        if r >= precision + margin:
            return Decision.AUTHENTIC
        if r <= precision - margin:
            return Decision.REJECTED
    return None


def evaluate_level(
    metric: Metric, reference: SpectralImage, candidate: SpectralImage, config: MetricConfig, bands: int
) -> float:
    """Aggregate metric value with both cubes reduced to ``bands`` bands."""
    if bands == reference.bands:
        return image_metric(metric, reference, candidate, config).aggregate
    idx = band_indices(reference.bands, bands)
    return image_metric(
        metric,
        subsample_bands(reference, bands),
        subsample_bands(candidate, bands),
        config.select(idx),
    ).aggregate


def resolve_metric_config(cfg: AuthConfig, white_spectrum: np.ndarray | None) -> MetricConfig:
    """Fill in the reference white from the store when the caller gave none."""
    mc = cfg.metric_config
    if mc.white is None and mc.cmf is not None and white_spectrum is not None:
        mc = replace(mc, white=reference_white(mc.cmf, white_spectrum))
    return mc


def authenticate(
    store: ReferenceStore, ref_id: str, candidate: SpectralImage, cfg: AuthConfig
) -> AuthVerdict:
    reference, white_spectrum = store.load(ref_id)
    if reference.samples.shape != candidate.samples.shape:
        raise DimensionMismatch(
            f"candidate {candidate.width}x{candidate.height}x{candidate.bands} does not match "
            f"reference {reference.width}x{reference.height}x{reference.bands}"
        )
    if reference.axis.wavelengths() != candidate.axis.wavelengths():
        raise AxisMismatch("candidate and reference use different wavelength axes")
    schedule = cfg.schedule_for(reference.bands)
    config = resolve_metric_config(cfg, white_spectrum)
    config.require(cfg.metric)

    polarity = cfg.metric.polarity
    trace: list[tuple[int, float]] = []
    decision = Decision.UNDECIDED
    for k in schedule:
        r = evaluate_level(cfg.metric, reference, candidate, config, k)
        trace.append((k, r))
        d = decide(r, polarity, cfg.precision, cfg.margin)
        if d is not None:
            decision = d
            break
    return AuthVerdict(
        decision,
        tuple(trace),
        trace[-1][1],
        trace[-1][0],
        cfg.metric,
        polarity,
        cfg.precision,
        cfg.margin,
    )
