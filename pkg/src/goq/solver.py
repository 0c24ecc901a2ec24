"""Alternating quantizer design minimizing decision loss.

Two loss modes drive the alternation:

  approx-Ltilde   the surrogate quadratic form (g - z)^T E(g) (g - z): region
                  step reassigns to the nearest representative under E(g),
                  representative step is one projected gradient-descent move
                  toward the E-weighted region centroid with a backtracking
                  line search (monotone on the fixed sample).
  exact-L         the exact excess loss f(chi(z); g) - f(chi(g); g): region
                  step by exact loss, representative step by compass pattern
                  search on the within-region mean (derivative-free).

Analytic sources are handled through one fixed seeded Monte Carlo draw reused
across iterations (common random numbers); empirical sources use their
dataset, which makes the exact mode the data-clustering variant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .goals import GoalModel
from .quantizers import Quantizer
from .sources import SourceModel, sample

__all__ = [
    "SolverConfig",
    "SolveTrace",
    "DegenerateSourceError",
    "CurvatureBlowupError",
    "individual_loss",
    "solve",
    "cluster",
]

log = logging.getLogger(__name__)

APPROX = "approx-Ltilde"
EXACT = "exact-L"


class DegenerateSourceError(RuntimeError):
    """All samples collapse into one region despite repairs."""


class CurvatureBlowupError(RuntimeError):
    """Non-finite surrogate loss; the offending parameter is reported."""


@dataclass
class SolverConfig:
    M: int
    max_iters: int = 200
    epsilon: Optional[float] = None     # default 1e-8 scalar / 1e-6 vector
    step_beta: float = 0.5
    step_c: float = 1e-4
    fixed_step: Optional[float] = None  # overrides backtracking when set
    init: str = "density-quantile"      # | "kmeans-seed" | "explicit"
    init_reps: Optional[np.ndarray] = None
    mc_points: int = 10_000
    seed: int = 0
    loss_mode: str = APPROX
    restarts: int = 1
    pattern_max_iters: int = 240
    pattern_tol: float = 1e-6

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.step_beta < 1:
            raise ValueError("step_beta must lie in (0, 1)")
        if self.loss_mode not in (APPROX, EXACT):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")


@dataclass
class SolveTrace:
    iterations: list = field(default_factory=list)  # (iter, loss, max_disp, repairs)
    converged: bool = False
    quantizer: Optional[Quantizer] = None
    quarantined: int = 0

    @property
    def losses(self):
        return [row[1] for row in self.iterations]


def individual_loss(goal: GoalModel, g: np.ndarray, z: np.ndarray,
                    mode: str = APPROX) -> float:
    """Loss of covering parameter g with representative z.

    approx-Ltilde: (g - z)^T E(g) (g - z); exact-L: f(chi(z); g) - f(chi(g); g).
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if mode == EXACT:
        xz = goal.decide(z)
        xg = goal.decide(g)
        return float(goal.evaluate(xz, g) - goal.evaluate(xg, g))
    from .hr_vector import weight_rows_sum

    E = weight_rows_sum(goal, g[None])[0]
    d = g - z
    return float(d @ E @ d)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------
def _init_reps(goal, source, pts, cfg, rng, dist_fn=None) -> np.ndarray:
    if cfg.init == "explicit":
        if cfg.init_reps is None:
            raise ValueError("init='explicit' needs init_reps")
        reps = np.atleast_2d(np.asarray(cfg.init_reps, dtype=float)).copy()
        if len(reps) != cfg.M:
            raise ValueError(f"init_reps has {len(reps)} rows, expected M={cfg.M}")
        return reps
    if cfg.init == "density-quantile" and goal.param_dim == 1:
        from .hr_scalar import optimal_density, uniform_density

        qs = (np.arange(cfg.M) + 0.5) / cfg.M
        try:
            rho = optimal_density(goal, source, kappa=2)
        except Exception:
            rho = None
        if rho is not None:
            return rho.quantiles(qs).reshape(-1, 1)
        if source.pdf_rows is not None:
            from .hr_scalar import density_from_unnormalized

            lo, hi = float(source.support.lo[0]), float(source.support.hi[0])
            prof = density_from_unnormalized(
                lambda g: source.pdf_rows(np.asarray(g, dtype=float).reshape(-1, 1)),
                (lo, hi))
            return prof.quantiles(qs).reshape(-1, 1)
    # distance-weighted seeding on the sample, in the solver's own metric
    # when one is available (aligns the start with the objective geometry)
    if dist_fn is None:
        dist_fn = lambda reps: np.min(
            ((pts[:, None, :] - np.asarray(reps)[None]) ** 2).sum(-1), axis=1)
    reps = [pts[rng.integers(len(pts))]]
    for _ in range(cfg.M - 1):
        d = np.maximum(dist_fn(np.array(reps)), 0.0)
        tot = d.sum()
        if tot <= 0:
            reps.append(pts[rng.integers(len(pts))])
        else:
            reps.append(pts[rng.choice(len(pts), p=d / tot)])
    return np.array(reps, dtype=float)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------
def solve(goal: GoalModel, source: SourceModel, cfg: SolverConfig):
    """Run the alternation, best of ``cfg.restarts`` seeded starts.

    All restarts share one fixed Monte Carlo sample (common random numbers),
    so their final losses are comparable and the best pick is fair; only the
    initialization stream varies. Returns (Quantizer, SolveTrace); the
    quantizer carries the weighted region rule with the goal's E oracle
    (approx mode) or the exact-loss membership rule (exact mode).
    """
    best = None
    for k in range(max(1, cfg.restarts)):
        q, trace = _solve_once(goal, source, cfg, init_salt=k)
        final = trace.losses[-1] if trace.losses else np.inf
        if best is None or final < best[0]:
            best = (final, q, trace)
    return best[1], best[2]


def _solve_once(goal: GoalModel, source: SourceModel, cfg: SolverConfig,
                init_salt: int = 0):
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), int(init_salt), 0x60A1]))
    if source.kind == "empirical":
        pts = np.asarray(source.dataset, dtype=float)
    else:
        pts = sample(source, cfg.mc_points, cfg.seed)
    if len(pts) < cfg.M:
        raise ValueError(f"need at least M={cfg.M} points, got {len(pts)}")
    eps = cfg.epsilon if cfg.epsilon is not None else (1e-8 if goal.param_dim == 1 else 1e-6)
    lo = np.where(np.isfinite(source.support.lo), source.support.lo, -np.inf)
    hi = np.where(np.isfinite(source.support.hi), source.support.hi, np.inf)

    trace = SolveTrace()
    if cfg.loss_mode == APPROX:
        from .hr_vector import weight_rows_sum

        E = weight_rows_sum(goal, pts)
        if not np.all(np.isfinite(E)):
            bad = pts[~np.all(np.isfinite(E.reshape(len(pts), -1)), axis=1)][0]
            raise CurvatureBlowupError(f"non-finite curvature weight at g={bad}")
        assign_fn, update_fn = _approx_ops(goal, (pts, E), cfg, lo, hi)
        seed_dist = lambda reps: assign_fn(reps)[1]
    else:
        cache = _ExactCache(goal, pts)
        trace.quarantined = cache.quarantined
        pts = cache.pts
        assign_fn, update_fn = _exact_ops(goal, cache, cfg, lo, hi)
        seed_dist = None
    reps = _init_reps(goal, source, pts, cfg, rng, dist_fn=seed_dist)

    for t in range(1, cfg.max_iters + 1):
        idx, per_point = assign_fn(reps)
        repairs = 0
        for m in range(cfg.M):
            if not np.any(idx == m):
                reps[m] = pts[int(np.argmax(per_point))]
                idx, per_point = assign_fn(reps)
                repairs += 1
        if len(np.unique(idx)) <= 1 and cfg.M > 1:
            raise DegenerateSourceError("all samples in one region after repairs")
        new_reps = update_fn(reps, idx)
        disp = float(((new_reps - reps) ** 2).sum())
        max_disp = float(np.abs(new_reps - reps).max())
        reps = new_reps
        _, per_point2 = assign_fn(reps)
        loss = float(per_point2.mean())
        if not np.isfinite(loss):
            raise CurvatureBlowupError("non-finite loss during alternation")
        trace.iterations.append((t, loss, max_disp, repairs))
        if disp < eps:
            trace.converged = True
            break

    if cfg.loss_mode == APPROX:
        from .hr_vector import weight_rows_sum as _wrs

        q = Quantizer(representatives=reps, support=source.support, rule="weighted",
                      metric_rows=lambda G: _wrs(goal, G),
                      provenance=f"goq-{cfg.loss_mode}", seed=cfg.seed)
    else:
        from .quantizers import decision_loss_rows

        q = Quantizer(representatives=reps, support=source.support, rule="decision-loss",
                      loss_rows=decision_loss_rows(goal),
                      provenance=f"goq-{cfg.loss_mode}", seed=cfg.seed)
    trace.quantizer = q
    return q, trace


def _approx_ops(goal, state, cfg, lo, hi):
    pts, E = state
    n, p = pts.shape
    # (g - z)^T E (g - z) = gEg - 2 z.(Eg) + z.(E)z: precompute the sample
    # terms once so assignment and line searches are matrix products
    Eg = np.einsum("nij,nj->ni", E, pts)
    gEg = np.einsum("ni,ni->n", Eg, pts)
    E_flat = E.reshape(n, p * p)

    def assign(reps):
        ZZ = np.einsum("mi,mj->mij", reps, reps).reshape(len(reps), p * p)
        forms = gEg[:, None] - 2.0 * (Eg @ reps.T) + E_flat @ ZZ.T
        idx = np.argmin(forms, axis=1)
        return idx, forms[np.arange(n), idx]

    def _segment_sums(idx, M):
        counts = np.bincount(idx, minlength=M).astype(float)
        S_Eg = np.stack([np.bincount(idx, weights=Eg[:, i], minlength=M)
                         for i in range(p)], axis=1)
        S_E = np.stack([np.bincount(idx, weights=E_flat[:, k], minlength=M)
                        for k in range(p * p)], axis=1).reshape(M, p, p)
        S_gEg = np.bincount(idx, weights=gEg, minlength=M)
        return counts, S_Eg, S_E, S_gEg

    def update(reps, idx):
        M = len(reps)
        counts, S_Eg, S_E, S_gEg = _segment_sums(idx, M)
        new = reps.copy()
        for m in range(M):
            cnt = counts[m]
            if cnt == 0:
                continue
            z = reps[m]
            # region objective is quadratic: evaluations are closed-form
            fm = lambda zz: (S_gEg[m] - 2.0 * zz @ S_Eg[m] + zz @ S_E[m] @ zz) / cnt
            grad = -2.0 * (S_Eg[m] - S_E[m] @ z) / cnt
            f0 = fm(z)
            if cfg.fixed_step is not None:
                r = cfg.fixed_step
            else:
                lam = float(np.linalg.eigvalsh(S_E[m] / cnt).max())
                r = 1.0 / (2.0 * max(lam, 1e-12))
            z_new = z
            for _ in range(50):
                cand = np.clip(z - r * grad, lo, hi)
                if fm(cand) <= f0 + cfg.step_c * float(grad @ (cand - z)):
                    z_new = cand
                    break
                if cfg.fixed_step is not None:
                    break
                r *= cfg.step_beta
            new[m] = z_new
        return new

    return assign, update


class _ExactCache:
    """Per-point ideal values and vectorized exact losses for candidate reps."""

    def __init__(self, goal, pts):
        self.goal = goal
        keep = np.ones(len(pts), dtype=bool)
        try:
            decisions = goal.decisions(pts)
            ideals = goal.value_rows(decisions, pts)
        except Exception:
            decisions = np.empty((len(pts), goal.decision_dim))
            ideals = np.empty(len(pts))
            for i, g in enumerate(pts):
                try:
                    x = goal.decide(g)
                    decisions[i] = x
                    ideals[i] = goal.evaluate(x, g)
                except Exception:
                    keep[i] = False
        self.quarantined = int((~keep).sum())
        if self.quarantined:
            log.warning("quarantined %d points whose decision rule failed", self.quarantined)
        self.pts = pts[keep]
        self.ideal = ideals[keep]

    def losses_for(self, reps, sel=None):
        pts = self.pts if sel is None else self.pts[sel]
        ideal = self.ideal if sel is None else self.ideal[sel]
        reps = np.atleast_2d(np.asarray(reps, dtype=float))
        decisions = self.goal.decisions(reps)
        return self.goal.value_grid(decisions, pts).T - ideal[:, None]


def _exact_ops(goal, cache, cfg, lo, hi):
    pts = cache.pts

    def assign(reps):
        L = cache.losses_for(reps)
        idx = np.argmin(L, axis=1)
        return idx, L[np.arange(len(pts)), idx]

    def update(reps, idx):
        new = reps.copy()
        for m in range(len(reps)):
            sel = idx == m
            if not sel.any():
                continue
            new[m] = _pattern_search(cache, reps[m], sel, cfg, lo, hi)
        return new

    return assign, update


def _pattern_search(cache, z0, sel, cfg, lo, hi):
    """Compass search on the within-region mean exact loss."""
    pts = cache.pts[sel]
    z = np.asarray(z0, dtype=float).copy()
    p = len(z)
    f0 = float(cache.losses_for(z[None], sel)[:, 0].mean())
    radius = float(np.sqrt(((pts - z) ** 2).sum(axis=1)).max())
    radius = max(radius, 10 * cfg.pattern_tol)
    eye = np.eye(p)
    for _ in range(cfg.pattern_max_iters):
        cands = np.concatenate([z + radius * eye, z - radius * eye])
        np.clip(cands, lo, hi, out=cands)
        vals = cache.losses_for(cands, sel).mean(axis=0)
        k = int(np.argmin(vals))
        if vals[k] < f0 - 1e-14:
            z, f0 = cands[k], float(vals[k])
        else:
            radius *= 0.5
            if radius < cfg.pattern_tol:
                break
    return z


def cluster(goal: GoalModel, dataset: SourceModel, cfg: SolverConfig):
    """Data-based variant: exact-loss alternation over an empirical dataset."""
    if dataset.kind != "empirical":
        raise ValueError("cluster() needs an empirical source")
    if dataset.dataset is None or len(dataset.dataset) == 0:
        raise ValueError("empty dataset")
    ccfg = replace(cfg, loss_mode=EXACT, init="kmeans-seed" if cfg.init == "density-quantile" else cfg.init)
    return solve(goal, dataset, ccfg)
