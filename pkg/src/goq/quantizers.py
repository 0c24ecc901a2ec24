"""Quantizer representation, encoding, companding construction, and the
distortion-based Lloyd-Max baseline.

Region rules:
  plain            nearest representative in Euclidean norm
  weighted         nearest under the parameter-dependent quadratic form
                   (g - z)^T E(g) (g - z); regions exist only through this
                   membership rule and are never materialized
  scalar-intervals explicit increasing boundaries, binary search
  decision-loss    smallest exact excess loss f(chi(z); g) - f(chi(g); g);
                   the deployment rule of the data-based design

Ties always break to the lowest region index, so encoding is a pure function.
Region indices are 0-based.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .sources import Box, SourceModel, sample

__all__ = [
    "Quantizer",
    "ClampCounter",
    "QuantizerFormatError",
    "encode",
    "decode",
    "quantize",
    "build_uniform_scalar",
    "build_compander_scalar",
    "build_product_uniform",
    "lloyd_max",
    "decision_loss_rows",
    "to_json",
    "from_json",
    "attach_metric",
]

log = logging.getLogger(__name__)


class QuantizerFormatError(ValueError):
    """Malformed serialized quantizer."""


class ClampCounter:
    """Counts encode calls that had to clamp points onto the support."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def bump(self, k: int):
        self.count += int(k)


@dataclass(frozen=True)
class Quantizer:
    representatives: np.ndarray  # (M, p)
    support: Box
    rule: str  # "plain" | "weighted" | "scalar-intervals" | "decision-loss"
    boundaries: Optional[np.ndarray] = None  # (M + 1,) for scalar-intervals
    metric_rows: Optional[Callable] = None   # (G (n,p)) -> (n,p,p) for weighted
    loss_rows: Optional[Callable] = None     # (G, reps) -> (n, M) for decision-loss
    provenance: str = ""
    seed: Optional[int] = None
    clamp_warnings: ClampCounter = field(default_factory=ClampCounter, compare=False)

    @property
    def M(self) -> int:
        return len(self.representatives)

    @property
    def param_dim(self) -> int:
        return self.representatives.shape[1]

    def __post_init__(self):
        reps = np.atleast_2d(np.asarray(self.representatives, dtype=float))
        object.__setattr__(self, "representatives", reps)
        if self.rule not in ("plain", "weighted", "scalar-intervals", "decision-loss"):
            raise QuantizerFormatError(f"unknown region rule {self.rule!r}")
        if self.rule == "scalar-intervals":
            b = np.asarray(self.boundaries, dtype=float)
            if b is None or len(b) != self.M + 1:
                raise QuantizerFormatError("scalar-intervals needs M+1 boundaries")
            if np.any(np.diff(b) <= 0):
                raise QuantizerFormatError("boundaries must be strictly increasing")
            object.__setattr__(self, "boundaries", b)
        if self.rule == "weighted" and self.metric_rows is None:
            raise QuantizerFormatError("weighted rule needs a metric oracle")
        if self.rule == "decision-loss" and self.loss_rows is None:
            raise QuantizerFormatError("decision-loss rule needs a loss oracle")


def encode(q: Quantizer, G: np.ndarray) -> np.ndarray:
    """Region index for each row of G (0-based). Points outside the support
    are clamped to it and counted on ``q.clamp_warnings``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    inside = q.support.contains(G)
    if not inside.all():
        q.clamp_warnings.bump((~inside).sum())
        G = q.support.clip(G)
    if q.rule == "scalar-intervals":
        g = G[:, 0]
        idx = np.searchsorted(q.boundaries, g, side="right") - 1
        return np.clip(idx, 0, q.M - 1)
    if q.rule == "weighted":
        E = np.asarray(q.metric_rows(G), dtype=float)
        d = G[:, None, :] - q.representatives[None, :, :]
        forms = np.einsum("nmi,nij,nmj->nm", d, E, d)
        return np.argmin(forms, axis=1)
    if q.rule == "decision-loss":
        losses = np.asarray(q.loss_rows(G, q.representatives), dtype=float)
        return np.argmin(losses, axis=1)
    # plain: chunked squared distances to keep memory bounded
    out = np.empty(len(G), dtype=np.int64)
    step = max(1, int(2e7) // max(q.M, 1))
    for a in range(0, len(G), step):
        blk = G[a:a + step]
        d2 = ((blk[:, None, :] - q.representatives[None, :, :]) ** 2).sum(axis=2)
        out[a:a + step] = np.argmin(d2, axis=1)
    return out


def decode(q: Quantizer, idx) -> np.ndarray:
    return q.representatives[np.asarray(idx, dtype=int)]


def quantize(q: Quantizer, G: np.ndarray) -> np.ndarray:
    return decode(q, encode(q, G))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------
def build_uniform_scalar(support, M: int) -> Quantizer:
    """Equal-width intervals with midpoint representatives."""
    lo, hi = _interval(support)
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    edges = np.linspace(lo, hi, M + 1)
    reps = 0.5 * (edges[:-1] + edges[1:])
    return Quantizer(
        representatives=reps.reshape(-1, 1),
        support=Box.of(lo, hi),
        rule="scalar-intervals",
        boundaries=edges,
        provenance="uniform-scalar",
    )


def _interval(support):
    if isinstance(support, Box):
        if support.dim != 1:
            raise ValueError("scalar builder needs a 1-d support")
        lo, hi = float(support.lo[0]), float(support.hi[0])
    else:
        lo, hi = float(support[0]), float(support[1])
    if not hi > lo:
        raise ValueError(f"degenerate support [{lo}, {hi}]")
    return lo, hi


def build_compander_scalar(rho, M: int) -> Quantizer:
    """Boundaries at the m/M quantiles of the point density, representatives
    at the midpoint quantiles (m - 1/2)/M."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    lo, hi = rho.support
    qs_b = np.arange(M + 1) / M
    qs_r = (np.arange(M) + 0.5) / M
    edges = rho.quantiles(qs_b)
    edges[0], edges[-1] = lo, hi
    reps = rho.quantiles(qs_r)
    # guard collapsed cells from flat density stretches
    edges = np.maximum.accumulate(edges)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("density produced non-increasing boundaries")
    return Quantizer(
        representatives=reps.reshape(-1, 1),
        support=Box.of(lo, hi),
        rule="scalar-intervals",
        boundaries=edges,
        provenance="compander",
    )


def build_product_uniform(support: Box, bits_per_axis: int) -> Quantizer:
    """Per-axis uniform quantizers combined into one plain-rule codebook."""
    if bits_per_axis < 1:
        raise ValueError("bits_per_axis must be >= 1")
    m = 2**bits_per_axis
    axes = [np.linspace(lo, hi, m + 1) for lo, hi in zip(support.lo, support.hi)]
    mids = [0.5 * (a[:-1] + a[1:]) for a in axes]
    grids = np.meshgrid(*mids, indexing="ij")
    reps = np.stack([g.ravel() for g in grids], axis=1)
    return Quantizer(
        representatives=reps,
        support=support,
        rule="plain",
        provenance=f"product-uniform-{bits_per_axis}bit",
    )


# ---------------------------------------------------------------------------
# Lloyd-Max
# ---------------------------------------------------------------------------
def lloyd_max(source: SourceModel, M: int, *, epsilon: float = 1e-10,
              max_iters: int = 500, mc_points: int = 100_000, seed: int = 0,
              return_trace: bool = False):
    """Classical centroid/nearest-neighbor alternation.

    Scalar analytic sources use quadrature centroids; otherwise the sample
    mean over a seeded Monte Carlo draw (or the dataset) is used. Dead
    regions are re-seeded at the sample with the largest current loss.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if source.kind == "analytic" and source.param_dim == 1 and source.pdf_rows is not None:
        return _lloyd_scalar_quadrature(source, M, epsilon, max_iters, seed, return_trace)
    pts = source.dataset if source.kind == "empirical" else sample(source, mc_points, seed)
    return _lloyd_sample(pts, source.support, M, epsilon, max_iters, seed, return_trace)


def _lloyd_scalar_quadrature(source, M, epsilon, max_iters, seed, return_trace):
    lo, hi = float(source.support.lo[0]), float(source.support.hi[0])
    pdf = lambda g: source.pdf_rows(np.array([[g]]))[0]
    reps = np.linspace(lo, hi, 2 * M + 1)[1::2]
    trace = []
    for _ in range(max_iters):
        edges = np.concatenate([[lo], 0.5 * (reps[:-1] + reps[1:]), [hi]])
        new = np.empty_like(reps)
        dist = 0.0
        for m in range(M):
            a, b = edges[m], edges[m + 1]
            mass = quad(pdf, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
            if mass <= 0:
                new[m] = 0.5 * (a + b)
                continue
            mean = quad(lambda g: g * pdf(g), a, b, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
            new[m] = mean / mass
            dist += quad(lambda g, zm=new[m]: (g - zm) ** 2 * pdf(g), a, b,
                         epsabs=1e-12, epsrel=1e-10, limit=200)[0]
        trace.append(dist)
        delta = float(((new - reps) ** 2).sum())
        reps = new
        if delta < epsilon:
            break
    edges = np.concatenate([[lo], 0.5 * (reps[:-1] + reps[1:]), [hi]])
    q = Quantizer(
        representatives=reps.reshape(-1, 1), support=source.support,
        rule="scalar-intervals", boundaries=edges,
        provenance="lloyd-max", seed=seed,
    )
    return (q, trace) if return_trace else q


def _lloyd_sample(pts, support, M, epsilon, max_iters, seed, return_trace):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if len(pts) < M:
        raise ValueError(f"need at least M={M} points, got {len(pts)}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1107]))
    reps = _kmeanspp_seed(pts, M, rng)
    trace = []
    for _ in range(max_iters):
        d2 = _sq_dists(pts, reps)
        idx = np.argmin(d2, axis=1)
        cur = d2[np.arange(len(pts)), idx]
        for m in range(M):
            if not np.any(idx == m):
                k = int(np.argmax(cur))
                reps[m] = pts[k]
                d2 = _sq_dists(pts, reps)
                idx = np.argmin(d2, axis=1)
                cur = d2[np.arange(len(pts)), idx]
        trace.append(float(cur.mean()))
        new = reps.copy()
        for m in range(M):
            sel = idx == m
            if sel.any():
                new[m] = pts[sel].mean(axis=0)
        delta = float(((new - reps) ** 2).sum())
        reps = new
        if delta < epsilon:
            break
    if pts.shape[1] == 1:
        order = np.argsort(reps[:, 0])
        reps = reps[order]
        lo, hi = float(support.lo[0]), float(support.hi[0])
        edges = np.concatenate([[lo], 0.5 * (reps[:-1, 0] + reps[1:, 0]), [hi]])
        q = Quantizer(representatives=reps, support=support, rule="scalar-intervals",
                      boundaries=edges, provenance="lloyd-max", seed=seed)
    else:
        q = Quantizer(representatives=reps, support=support, rule="plain",
                      provenance="lloyd-max", seed=seed)
    return (q, trace) if return_trace else q


def _sq_dists(pts, reps):
    return ((pts[:, None, :] - reps[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp_seed(pts, M, rng):
    reps = [pts[rng.integers(len(pts))]]
    for _ in range(M - 1):
        d2 = np.min(_sq_dists(pts, np.array(reps)), axis=1)
        tot = d2.sum()
        if tot <= 0:
            reps.append(pts[rng.integers(len(pts))])
            continue
        reps.append(pts[rng.choice(len(pts), p=d2 / tot)])
    return np.array(reps, dtype=float)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def to_json(q: Quantizer) -> str:
    payload = {
        "M": q.M,
        "representatives": q.representatives.tolist(),
        "rule": q.rule,
        "provenance": q.provenance,
        "seed": q.seed,
        "support": {"lo": q.support.lo.tolist(), "hi": q.support.hi.tolist()},
    }
    if q.boundaries is not None:
        payload["boundaries"] = q.boundaries.tolist()
    return json.dumps(payload, indent=2)


def from_json(text: str) -> Quantizer:
    """Rebuild from JSON; weighted quantizers come back without their metric
    oracle (see ``attach_metric``)."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QuantizerFormatError(f"not valid JSON: {exc}") from exc
    try:
        reps = np.asarray(payload["representatives"], dtype=float)
        support = Box.of(payload["support"]["lo"], payload["support"]["hi"])
        rule = payload["rule"]
    except (KeyError, TypeError) as exc:
        raise QuantizerFormatError(f"missing field: {exc}") from exc
    boundaries = payload.get("boundaries")
    if rule in ("weighted", "decision-loss"):
        # deserialized without its oracle; attach_metric() restores it
        q = Quantizer(representatives=reps, support=support, rule="plain",
                      provenance=payload.get("provenance", ""),
                      seed=payload.get("seed"))
        if rule == "weighted":
            return replace(q, rule=rule, metric_rows=_missing_oracle)
        return replace(q, rule=rule, loss_rows=_missing_oracle)
    return Quantizer(
        representatives=reps, support=support, rule=rule,
        boundaries=None if boundaries is None else np.asarray(boundaries, dtype=float),
        provenance=payload.get("provenance", ""), seed=payload.get("seed"),
    )


def _missing_oracle(*_args):
    raise QuantizerFormatError(
        "quantizer was deserialized without its goal oracle; "
        "use attach_metric(q, goal) before encoding"
    )


def decision_loss_rows(goal):
    """Loss oracle (G, reps) -> (n, M) of exact excess losses for encoding."""

    def rows(G, reps):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        reps = np.atleast_2d(np.asarray(reps, dtype=float))
        ideal = goal.value_rows(goal.decisions(G), G)
        return goal.value_grid(goal.decisions(reps), G).T - ideal[:, None]

    return rows


def attach_metric(q: Quantizer, goal) -> Quantizer:
    """Bind a goal's oracles to a (deserialized) weighted or decision-loss
    quantizer."""
    from .hr_vector import weight_rows_sum

    if q.rule == "decision-loss":
        return replace(q, loss_rows=decision_loss_rows(goal))
    return replace(q, rule="weighted", metric_rows=lambda G: weight_rows_sum(goal, G))
