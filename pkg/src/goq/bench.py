"""Monte Carlo loss evaluation, paired quantizer comparison, and the
required-cluster-count sweep.

Per-sample exact excess loss is f(chi(Q(g)); g) - f(chi(g); g). Relative loss
is reported two ways:

  mean_relative_ol_pct   mean of per-sample ratios 100 * loss / |ideal|,
                         excluding samples whose |ideal| falls under a guard
                         threshold (their fraction is reported); matches the
                         per-realization averaging convention.
  ratio_of_means_pct     100 * mean(loss) / |mean(ideal)|; the stable choice
                         when the ideal value crosses zero inside the support,
                         where the per-sample ratio has unbounded expectation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .goals import GoalModel, builtin_goal
from .quantizers import Quantizer, encode, lloyd_max
from .solver import SolverConfig, cluster
from .sources import SourceModel, sample

__all__ = [
    "LossReport",
    "DENOM_GUARD",
    "monte_carlo_ol",
    "compare",
    "required_clusters",
]

log = logging.getLogger(__name__)

DENOM_GUARD = 1e-9


@dataclass(frozen=True)
class LossReport:
    quantizer_tag: str
    goal_tag: str
    M: int
    n: int
    seed: int
    mean_ol: float
    std_error: float
    mean_relative_ol_pct: float
    relative_std_error_pct: float
    ratio_of_means_pct: float
    guarded_fraction: float
    skipped: int = 0


def _decisions_for_quantized(goal: GoalModel, q: Quantizer, G: np.ndarray):
    """chi(Q(g)) for all rows, computing one decision per representative."""
    idx = encode(q, G)
    reps = q.representatives
    uniq = np.unique(idx)
    dec = np.empty((q.M, goal.decision_dim))
    for m in uniq:
        dec[m] = np.asarray(goal.decide(reps[m]), dtype=float)
    return dec[idx], idx


def monte_carlo_ol(goal: GoalModel, q: Optional[Quantizer], source: SourceModel,
                   n: int, seed: int) -> LossReport:
    """Seeded Monte Carlo estimate of the expected excess loss of deciding
    from Q(g) instead of g. ``q=None`` evaluates the infinite-resolution
    surrogate Q(g) = g (zero loss by construction)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    G = sample(source, n, seed)
    skipped = 0
    try:
        x_opt = goal.decisions(G)
        ideal = goal.value_rows(x_opt, G)
    except Exception:
        x_opt = np.empty((len(G), goal.decision_dim))
        keep = np.ones(len(G), dtype=bool)
        ideal = np.empty(len(G))
        for i, g in enumerate(G):
            try:
                x_opt[i] = goal.decide(g)
                ideal[i] = goal.evaluate(x_opt[i], g)
            except Exception:
                keep[i] = False
        skipped = int((~keep).sum())
        G, x_opt, ideal = G[keep], x_opt[keep], ideal[keep]

    if q is None:
        x_hat = x_opt
        M = 0
    else:
        x_hat, _ = _decisions_for_quantized(goal, q, G)
        M = q.M
    achieved = goal.value_rows(x_hat, G)
    loss = achieved - ideal

    mean = float(loss.mean())
    se = float(loss.std(ddof=1) / np.sqrt(len(loss))) if len(loss) > 1 else 0.0
    denom = np.abs(ideal)
    ok = denom > DENOM_GUARD
    ratios = 100.0 * loss[ok] / denom[ok]
    rel_mean = float(ratios.mean()) if ok.any() else float("nan")
    rel_se = float(ratios.std(ddof=1) / np.sqrt(ok.sum())) if ok.sum() > 1 else 0.0
    mean_ideal = float(np.abs(ideal.mean()))
    rom = 100.0 * mean / mean_ideal if mean_ideal > DENOM_GUARD else float("nan")
    return LossReport(
        quantizer_tag=(q.provenance if q is not None else "identity"),
        goal_tag=goal.name,
        M=M, n=n, seed=seed,
        mean_ol=mean, std_error=se,
        mean_relative_ol_pct=rel_mean, relative_std_error_pct=rel_se,
        ratio_of_means_pct=rom,
        guarded_fraction=float(1.0 - ok.mean()),
        skipped=skipped,
    )


def compare(goal: GoalModel, source: SourceModel, quantizers: Sequence[Quantizer],
            n: int, seed: int) -> list[LossReport]:
    """Evaluate several quantizers on one common seeded sample so the reports
    are paired."""
    dims = {q.param_dim for q in quantizers if q is not None}
    if len(dims) > 1:
        raise ValueError(f"quantizers disagree on parameter dimension: {dims}")
    return [monte_carlo_ol(goal, q, source, n, seed) for q in quantizers]


# ---------------------------------------------------------------------------
# required cluster counts
# ---------------------------------------------------------------------------
def _dataset_relative_ol(goal: GoalModel, q: Quantizer, data: np.ndarray,
                         ideal: np.ndarray) -> float:
    """Mean per-point relative loss (percent) over the full dataset."""
    x_hat, _ = _decisions_for_quantized(goal, q, data)
    achieved = goal.value_rows(x_hat, data)
    denom = np.abs(ideal)
    ok = denom > DENOM_GUARD
    return float((100.0 * (achieved - ideal)[ok] / denom[ok]).mean())


def required_clusters(dataset: SourceModel, p_values: Sequence[float],
                      target_rel_ol_pct: float, m_range, cfg: SolverConfig,
                      *, energy: float = 30.0) -> list[dict]:
    """Smallest cluster count reaching the loss target, per norm exponent,
    for the goal-driven clustering and the distortion baseline.

    Increasing search over M with warm-started representatives (previous
    codebook plus the worst-loss point). Unreachable targets are reported
    with ``saturated=True`` at the top of the range.
    """
    if target_rel_ol_pct <= 0:
        raise ValueError("target must be positive")
    m_lo, m_hi = int(m_range[0]), int(m_range[1])
    if m_lo < 1 or m_hi < m_lo:
        raise ValueError(f"bad M range ({m_lo}, {m_hi})")
    if dataset.kind != "empirical":
        raise ValueError("required_clusters needs an empirical dataset source")
    data = dataset.dataset
    out = []
    for P in p_values:
        goal = builtin_goal("pcs-lp", P=float(P), energy=energy, dim=dataset.param_dim)
        ideal = goal.value_rows(goal.decisions(data), data)
        row = {"P": float(P)}
        for method in ("goq", "kmeans"):
            reps_prev = None
            found = None
            for M in range(m_lo, m_hi + 1):
                q = _fit_one(goal, dataset, M, cfg, method, reps_prev, ideal)
                reps_prev = q.representatives
                rel = _dataset_relative_ol(goal, q, data, ideal)
                if rel <= target_rel_ol_pct:
                    found = M
                    break
            row[f"m_{method}"] = found if found is not None else m_hi
            row[f"saturated_{method}"] = found is None
        out.append(row)
        log.info("P=%s: goq=%s kmeans=%s", row["P"], row["m_goq"], row["m_kmeans"])
    return out


def _fit_one(goal, dataset, M, cfg, method, reps_prev, ideal):
    if method != "goq":
        # the distortion baseline is cheap enough to refit from scratch
        return lloyd_max(dataset, M, epsilon=1e-10, max_iters=cfg.max_iters,
                         seed=cfg.seed)
    data = dataset.dataset
    init = None
    if reps_prev is not None and len(reps_prev) == M - 1:
        # warm start: previous codebook plus the current worst-loss point
        from .quantizers import decision_loss_rows

        qprev = Quantizer(representatives=reps_prev, support=dataset.support,
                          rule="decision-loss", loss_rows=decision_loss_rows(goal))
        x_hat, _ = _decisions_for_quantized(goal, qprev, data)
        losses = goal.value_rows(x_hat, data) - ideal
        init = np.vstack([reps_prev, data[int(np.argmax(losses))]])
    ccfg = replace(cfg, M=M,
                   init="explicit" if init is not None else "kmeans-seed",
                   init_reps=init)
    q, _ = cluster(goal, dataset, ccfg)
    return q
