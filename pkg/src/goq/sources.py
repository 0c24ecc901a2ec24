"""Input-parameter models: analytic densities with samplers, empirical
datasets, and CSV ingestion.

Analytic sources with unbounded support are truncated at the 1 - 1e-6
quantile per axis so region geometry and quadrature act on a compact box;
their samplers redraw tail hits, and their pdfs are renormalized to the box.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Box",
    "SourceModel",
    "SourceParameterError",
    "UnknownSourceError",
    "CsvFormatError",
    "builtin_source",
    "builtin_source_ids",
    "empirical_source",
    "load_csv",
    "sample",
]

TAIL_MASS = 1e-6


class SourceParameterError(ValueError):
    """Invalid parameter record for a built-in source."""


class UnknownSourceError(ValueError):
    """Source id not present in the registry."""


class CsvFormatError(ValueError):
    """Dataset rows failed to parse (strict mode)."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in parameter space."""

    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def of(lo, hi) -> "Box":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise SourceParameterError(f"invalid box bounds lo={lo}, hi={hi}")
        return Box(lo=lo, hi=hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)

    def clip(self, pts: np.ndarray) -> np.ndarray:
        return np.clip(np.atleast_2d(np.asarray(pts, dtype=float)), self.lo, self.hi)


@dataclass(frozen=True)
class SourceModel:
    """Analytic distribution (pdf + sampler) or empirical dataset."""

    name: str
    kind: str  # "analytic" | "empirical"
    param_dim: int
    support: Box
    sampler: Callable  # (rng, n) -> (n, p)
    pdf_rows: Optional[Callable] = None  # (G (n, p)) -> (n,)
    dataset: Optional[np.ndarray] = None

    def pdf(self, g) -> float:
        if self.pdf_rows is None:
            raise ValueError(f"source {self.name} has no tractable pdf")
        return float(self.pdf_rows(np.atleast_2d(np.asarray(g, dtype=float)))[0])


def sample(source: SourceModel, n: int, seed: int) -> np.ndarray:
    """Deterministic i.i.d. draws: from the pdf (analytic) or uniformly with
    replacement from the dataset (empirical)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    if source.kind == "empirical":
        if source.dataset is None or len(source.dataset) == 0:
            raise ValueError(f"empirical source {source.name} has an empty dataset")
        idx = rng.integers(0, len(source.dataset), size=n)
        return source.dataset[idx].copy()
    return source.sampler(rng, n)


def _rejection(draw, hi: np.ndarray, rng, n: int, p: int) -> np.ndarray:
    """Redraw coordinates that land beyond the truncated support."""
    out = draw(rng, (n, p))
    for _ in range(64):
        bad = out > hi
        if not bad.any():
            break
        out[bad] = draw(rng, int(bad.sum()))
    return np.minimum(out, hi)


def _uniform_box(params) -> SourceModel:
    lo = params.pop("lo", 0.1)
    hi = params.pop("hi", 10.0)
    p = int(params.pop("dim", np.atleast_1d(lo).size))
    box = Box.of(np.broadcast_to(np.atleast_1d(lo), (p,)),
                 np.broadcast_to(np.atleast_1d(hi), (p,)))
    dens = 1.0 / box.volume

    def pdf_rows(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        return np.where(box.contains(G), dens, 0.0)

    return SourceModel(
        name="uniform-box", kind="analytic", param_dim=p, support=box,
        sampler=lambda rng, n: rng.uniform(box.lo, box.hi, size=(n, p)),
        pdf_rows=pdf_rows,
    )


def _trunc_exp(params) -> SourceModel:
    lo = float(params.pop("lo", 0.1))
    hi = float(params.pop("hi", 10.0))
    rate = float(params.pop("rate", 1.0))
    if rate <= 0:
        raise SourceParameterError(f"rate must be positive, got {rate}")
    box = Box.of(lo, hi)
    z = (math.exp(-rate * lo) - math.exp(-rate * hi)) / rate

    def pdf_rows(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        return np.where(box.contains(G), np.exp(-rate * G[:, 0]) / z, 0.0)

    def sampler(rng, n):
        # inverse CDF restricted to [lo, hi]
        u = rng.uniform(0.0, 1.0, size=n)
        flo, fhi = 1 - math.exp(-rate * lo), 1 - math.exp(-rate * hi)
        return (-np.log1p(-(flo + u * (fhi - flo))) / rate).reshape(n, 1)

    return SourceModel(
        name="trunc-exp", kind="analytic", param_dim=1, support=box,
        sampler=sampler, pdf_rows=pdf_rows,
    )


def _exp_iid(params) -> SourceModel:
    p = int(params.pop("dim", 2))
    rate = float(params.pop("rate", 1.0))
    if rate <= 0:
        raise SourceParameterError(f"rate must be positive, got {rate}")
    if p < 1:
        raise SourceParameterError(f"dim must be >= 1, got {p}")
    hi = -math.log(TAIL_MASS) / rate
    box = Box.of(np.zeros(p), np.full(p, hi))
    axis_norm = 1.0 - TAIL_MASS

    def pdf_rows(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        dens = (rate**p) * np.exp(-rate * G.sum(axis=1)) / axis_norm**p
        return np.where(box.contains(G), dens, 0.0)

    def sampler(rng, n):
        draw = lambda r, size: r.exponential(1.0 / rate, size=size)
        return _rejection(draw, box.hi, rng, n, p)

    return SourceModel(
        name="exp-iid", kind="analytic", param_dim=p, support=box,
        sampler=sampler, pdf_rows=pdf_rows,
    )


def _rayleigh_gain(params) -> SourceModel:
    mean = float(params.pop("mean", 1.0))
    if mean <= 0:
        raise SourceParameterError(f"mean must be positive, got {mean}")
    p = int(params.pop("dim", 1))
    if p < 1:
        raise SourceParameterError(f"dim must be >= 1, got {p}")
    sigma = mean / math.sqrt(math.pi / 2.0)
    hi = sigma * math.sqrt(2.0 * math.log(1.0 / TAIL_MASS))
    box = Box.of(np.zeros(p), np.full(p, hi))
    axis_norm = 1.0 - TAIL_MASS

    def pdf_rows(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        per_axis = (G / sigma**2) * np.exp(-G**2 / (2 * sigma**2)) / axis_norm
        return np.where(box.contains(G), per_axis.prod(axis=1), 0.0)

    def sampler(rng, n):
        draw = lambda r, size: r.rayleigh(sigma, size=size)
        return _rejection(draw, box.hi, rng, n, p)

    return SourceModel(
        name="rayleigh-gain", kind="analytic", param_dim=p, support=box,
        sampler=sampler, pdf_rows=pdf_rows,
    )


def _synthetic_load(params) -> SourceModel:
    """Daily load profiles: smooth base shape + 1-3 peaks + truncated noise.

    Sampling-only source (no tractable pdf); magnitudes in kWh per slot.
    """
    p = int(params.pop("dim", 24))
    if p < 2:
        raise SourceParameterError(f"dim must be >= 2, got {p}")
    peak_hi = float(params.pop("peak_max", 4.0))
    noise = float(params.pop("noise", 0.08))
    max_kwh = 2.0 + peak_hi + 6 * noise
    box = Box.of(np.zeros(p), np.full(p, max_kwh))
    hours = np.arange(p)

    def sampler(rng, n):
        base_lvl = rng.uniform(0.3, 1.1, size=(n, 1))
        amp = rng.uniform(0.2, 0.6, size=(n, 1))
        phase = rng.uniform(0, p, size=(n, 1))
        base = base_lvl + amp * np.maximum(np.sin(2 * np.pi * (hours - phase) / p), 0.0)
        n_peaks = rng.integers(1, 4, size=n)
        prof = base.copy()
        centers = rng.integers(0, p, size=(n, 3))
        heights = rng.uniform(1.2, peak_hi, size=(n, 3))
        widths = rng.uniform(0.6, 1.6, size=(n, 3))
        for k in range(3):
            active = (n_peaks > k).astype(float)
            d = np.minimum(np.abs(hours[None, :] - centers[:, k:k + 1]),
                           p - np.abs(hours[None, :] - centers[:, k:k + 1]))
            prof += active[:, None] * heights[:, k:k + 1] * np.exp(-0.5 * (d / widths[:, k:k + 1]) ** 2)
        prof += np.clip(rng.normal(0.0, noise, size=(n, p)), -3 * noise, 3 * noise)
        return np.clip(prof, 0.0, max_kwh)

    return SourceModel(
        name="synthetic-load", kind="analytic", param_dim=p, support=box,
        sampler=sampler, pdf_rows=None,
    )


_REGISTRY = {
    "uniform-box": _uniform_box,
    "trunc-exp": _trunc_exp,
    "exp-iid": _exp_iid,
    "rayleigh-gain": _rayleigh_gain,
    "synthetic-load": _synthetic_load,
}


def builtin_source_ids():
    return tuple(_REGISTRY)


def builtin_source(name: str, **params) -> SourceModel:
    if name not in _REGISTRY:
        raise UnknownSourceError(f"unknown source id {name!r}; known: {sorted(_REGISTRY)}")
    params = dict(params)
    src = _REGISTRY[name](params)
    if params:
        raise SourceParameterError(f"unknown parameters for {name}: {sorted(params)}")
    return src


def empirical_source(dataset: np.ndarray, name: str = "dataset") -> SourceModel:
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    if data.size == 0:
        raise SourceParameterError("empty dataset")
    box = Box.of(data.min(axis=0), data.max(axis=0) + 1e-12)
    return SourceModel(
        name=name, kind="empirical", param_dim=data.shape[1], support=box,
        sampler=lambda rng, n: data[rng.integers(0, len(data), size=n)].copy(),
        dataset=data,
    )


def load_csv(path, lenient: bool = False, name: str | None = None) -> SourceModel:
    """One row per point, numeric columns, optional header.

    Rows that fail to parse raise (strict) or are reported to stderr with
    their line numbers and skipped (lenient).
    """
    import sys

    path = Path(path)
    rows, bad = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 1:
                    continue  # header
                bad.append(lineno)
    if bad:
        msg = f"{path}: unparseable rows at lines {bad}"
        if not lenient:
            raise CsvFormatError(msg)
        print(f"warning: {msg} (skipped)", file=sys.stderr)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CsvFormatError(f"{path}: inconsistent column counts {sorted(widths)}")
    return empirical_source(np.array(rows, dtype=float), name=name or path.stem)
