"""Goal functions, their decision rules, and derivative machinery.

Every goal is expressed in minimization convention: utility-style metrics
(rate, energy efficiency, sigmoidal efficiency) are negated internally so the
published decision rule is a true minimizer. A goal bundles

  * ``evaluate(x, g)``     scalar objective value,
  * ``decide(g)``          the decision rule chi(g) (argmin over the feasible set),
  * ``decision_set``       box plus optional sum constraints on x,
  * optional analytic derivative oracles used by the high-resolution theory.

Vectorized ``*_rows`` variants exist wherever the closed forms allow; callers
fall back to per-point loops otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "DecisionSet",
    "GoalDerivatives",
    "GoalModel",
    "CurvatureBundle",
    "GoalParameterError",
    "UnknownGoalError",
    "DerivativeMismatch",
    "UnsupportedGoalError",
    "builtin_goal",
    "builtin_goal_ids",
    "euclidean_quadratic",
    "with_decision",
    "curvature",
    "detect_kappa",
]


class GoalParameterError(ValueError):
    """Invalid parameter record for a built-in goal."""


class UnknownGoalError(ValueError):
    """Goal id not present in the registry."""


class DerivativeMismatch(RuntimeError):
    """Analytic and finite-difference derivatives disagree beyond tolerance."""


class UnsupportedGoalError(RuntimeError):
    """No usable smoothness order found (order > 4 is out of scope)."""


# ---------------------------------------------------------------------------
# feasible sets
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DecisionSet:
    """Axis-aligned box with optional lower/upper bounds on sum(x)."""

    lo: np.ndarray
    hi: np.ndarray
    sum_min: Optional[float] = None
    sum_max: Optional[float] = None

    @staticmethod
    def box(lo, hi, dim: int, sum_min=None, sum_max=None) -> "DecisionSet":
        return DecisionSet(
            lo=np.full(dim, float(lo)),
            hi=np.full(dim, float(hi)),
            sum_min=sum_min,
            sum_max=sum_max,
        )

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            return False
        s = float(x.sum())
        if self.sum_min is not None and s < self.sum_min - tol:
            return False
        if self.sum_max is not None and s > self.sum_max + tol:
            return False
        return True

    def clip(self, x: np.ndarray) -> np.ndarray:
        """Project loosely into the set: box clip, then rescale to meet a
        violated sum constraint (clipping-then-rescaling)."""
        y = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        s = float(y.sum())
        if self.sum_max is not None and s > self.sum_max and s > 0:
            y = y * (self.sum_max / s)
        if self.sum_min is not None and y.sum() < self.sum_min:
            s = float(y.sum())
            if s > 0:
                y = y * (self.sum_min / s)
            else:
                y = y + (self.sum_min - s) / len(y)
        return np.clip(y, self.lo, self.hi)

    def sample(self, rng: np.random.Generator, n: int, span: float = 10.0) -> np.ndarray:
        """Random feasible points for probing; infinite box edges are replaced
        by +-span."""
        lo = np.where(np.isfinite(self.lo), self.lo, -span)
        hi = np.where(np.isfinite(self.hi), self.hi, span)
        pts = rng.uniform(lo, hi, size=(n, self.dim))
        if self.sum_min is not None or self.sum_max is not None:
            pts = np.array([self.clip(p) for p in pts])
        return pts


# ---------------------------------------------------------------------------
# goal model
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GoalDerivatives:
    """Optional analytic oracles. Any subset may be present.

    grad_x(x, g) -> (d,)        gradient of f in x
    hess_x(x, g) -> (d, d)      Hessian of f in x
    jac_chi(g) -> (d, p)        Jacobian of the decision rule
    hess_chi(g) -> (d, p, p)    Hessians of each decision component
    scalar_weight_rows(G) -> (n,)   (chi'(g))^2 f''(chi(g); g), d = p = 1 only
    weight_rows(G) -> (A, B)    batch (n,p,p) curvature/correction matrices
    """

    grad_x: Optional[Callable] = None
    hess_x: Optional[Callable] = None
    jac_chi: Optional[Callable] = None
    hess_chi: Optional[Callable] = None
    scalar_weight_rows: Optional[Callable] = None
    weight_rows: Optional[Callable] = None


@dataclass(frozen=True)
class GoalModel:
    """A goal function in minimization convention with its decision rule."""

    name: str
    decision_dim: int
    param_dim: int
    evaluate: Callable
    decide: Callable
    decision_set: DecisionSet
    derivatives: Optional[GoalDerivatives] = None
    scale_factor: float = 1.0
    params: Mapping = field(default_factory=dict)
    evaluate_rows: Optional[Callable] = None
    decide_rows: Optional[Callable] = None
    evaluate_grid: Optional[Callable] = None  # (X (m,d), G (n,p)) -> (m,n)

    def value_rows(self, X: np.ndarray, G: np.ndarray) -> np.ndarray:
        """f(x_i; g_i) for paired rows."""
        if self.evaluate_rows is not None:
            return np.asarray(self.evaluate_rows(X, G), dtype=float)
        return np.array([self.evaluate(x, g) for x, g in zip(X, G)], dtype=float)

    def value_grid(self, X: np.ndarray, G: np.ndarray) -> np.ndarray:
        """f(x_j; g_i) for every decision row against every parameter row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if self.evaluate_grid is not None:
            return np.asarray(self.evaluate_grid(X, G), dtype=float)
        out = np.empty((len(X), len(G)))
        for j, x in enumerate(X):
            out[j] = self.value_rows(np.broadcast_to(x, (len(G), len(x))), G)
        return out

    def decisions(self, G: np.ndarray) -> np.ndarray:
        if self.decide_rows is not None:
            return np.asarray(self.decide_rows(G), dtype=float)
        return np.array([self.decide(g) for g in G], dtype=float)


def with_decision(goal: GoalModel, decide: Callable, decide_rows=None) -> GoalModel:
    """Swap in a (possibly suboptimal) decision rule.

    Decision-side derivative oracles are dropped; curvature falls back to
    finite differences so the first-order correction matrix is picked up.
    """
    der = goal.derivatives
    if der is not None:
        der = replace(der, jac_chi=None, hess_chi=None, scalar_weight_rows=None, weight_rows=None)
    return replace(
        goal,
        decide=decide,
        decide_rows=decide_rows,
        derivatives=der,
        name=goal.name + "+custom-decision",
    )


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------
def _fd_step(v: float, h0: float = 1e-5) -> float:
    return max(h0, h0 * abs(v))


def _clamped(x: np.ndarray, dset: DecisionSet) -> tuple[np.ndarray, bool]:
    y = np.clip(x, dset.lo, dset.hi)
    return y, bool(np.any(y != x))


def _fd_grad(fn, x, dset):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    degraded = False
    for i in range(len(x)):
        h = _fd_step(x[i])
        xp, c1 = _clamped(x + h * _unit(len(x), i), dset)
        xm, c2 = _clamped(x - h * _unit(len(x), i), dset)
        degraded |= c1 or c2
        g[i] = (fn(xp) - fn(xm)) / (xp[i] - xm[i])
    return g, degraded


def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def _fd_hess(fn, x, dset):
    """Symmetric FD Hessian; 5-point stencil on the diagonal."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    H = np.zeros((n, n))
    degraded = False
    f0 = fn(x)
    for i in range(n):
        h = _fd_step(x[i], 1e-4)
        pts = [x + k * h * _unit(n, i) for k in (-2, -1, 1, 2)]
        cl = [_clamped(p, dset) for p in pts]
        degraded |= any(c for _, c in cl)
        fm2, fm1, fp1, fp2 = (fn(p) for p, _ in cl)
        H[i, i] = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h * h)
    for i in range(n):
        for j in range(i + 1, n):
            hi = _fd_step(x[i], 1e-4)
            hj = _fd_step(x[j], 1e-4)
            ei, ej = _unit(n, i), _unit(n, j)
            vals = []
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                p, c = _clamped(x + si * hi * ei + sj * hj * ej, dset)
                degraded |= c
                vals.append(fn(p))
            H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * hi * hj)
    return H, degraded


def _fd_jac(fn, g):
    g = np.asarray(g, dtype=float)
    cols = []
    for j in range(len(g)):
        h = _fd_step(g[j])
        cols.append((np.asarray(fn(g + h * _unit(len(g), j))) - np.asarray(fn(g - h * _unit(len(g), j)))) / (2 * h))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# curvature bundle
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CurvatureBundle:
    """Derivatives of f and chi evaluated at (chi(g), g)."""

    grad_f: np.ndarray      # (d,)
    hess_f: np.ndarray      # (d, d)
    jac_chi: np.ndarray     # (d, p)
    hess_chi: np.ndarray    # (d, p, p)
    degraded: bool = False


def curvature(goal: GoalModel, g: np.ndarray, *, validate: bool = False,
              rtol: float = 1e-4) -> CurvatureBundle:
    """Gradient/Hessian of f and Jacobian/Hessians of chi at g.

    Analytic oracles are used when present, otherwise central finite
    differences (5-point stencils on Hessian diagonals). With ``validate``,
    analytic values are cross-checked against finite differences and a
    ``DerivativeMismatch`` is raised beyond ``rtol`` (component-wise, scaled
    by the larger magnitude in the block).
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    x0 = np.atleast_1d(np.asarray(goal.decide(g), dtype=float))
    der = goal.derivatives or GoalDerivatives()
    fx = lambda x: float(goal.evaluate(x, g))
    degraded = False

    def fd_grad():
        nonlocal degraded
        v, d = _fd_grad(fx, x0, goal.decision_set)
        degraded |= d
        return v

    def fd_hess():
        nonlocal degraded
        v, d = _fd_hess(fx, x0, goal.decision_set)
        degraded |= d
        return v

    def fd_jac():
        return _fd_jac(lambda gg: np.atleast_1d(goal.decide(gg)), g)

    def fd_hess_chi():
        out = []
        for i in range(goal.decision_dim):
            comp = lambda gg: float(np.atleast_1d(goal.decide(gg))[i])
            H, _ = _fd_hess(comp, g, DecisionSet.box(-np.inf, np.inf, len(g)))
            out.append(H)
        return np.stack(out)

    grad = np.atleast_1d(der.grad_x(x0, g)) if der.grad_x else fd_grad()
    hess = np.atleast_2d(der.hess_x(x0, g)) if der.hess_x else fd_hess()
    jac = np.atleast_2d(der.jac_chi(g)) if der.jac_chi else fd_jac()
    hchi = np.asarray(der.hess_chi(g)) if der.hess_chi else fd_hess_chi()
    if hchi.ndim == 2:
        hchi = hchi[None]

    if validate:
        pairs = []
        if der.grad_x:
            pairs.append(("grad_f", grad, fd_grad()))
        if der.hess_x:
            pairs.append(("hess_f", hess, fd_hess()))
        if der.jac_chi:
            pairs.append(("jac_chi", jac, fd_jac()))
        if der.hess_chi:
            pairs.append(("hess_chi", hchi, fd_hess_chi()))
        if degraded:
            # probes were clamped at the feasible-set boundary; the finite
            # differences are one-sided garbage there, not a usable reference
            return CurvatureBundle(grad_f=grad, hess_f=hess, jac_chi=jac,
                                   hess_chi=hchi, degraded=True)
        for tag, a, b in pairs:
            scale = max(np.abs(a).max(), np.abs(b).max(), 1.0)
            err = np.abs(a - b).max() / scale
            if err > rtol:
                raise DerivativeMismatch(f"{goal.name}:{tag} analytic vs FD relative error {err:.2e} at g={g}")
    return CurvatureBundle(grad_f=grad, hess_f=hess, jac_chi=jac, hess_chi=hchi,
                           degraded=degraded)


def detect_kappa(goal: GoalModel, source, probes: int, seed: int = 0,
                 rel_tol: float = 1e-4) -> int:
    """Smallest derivative order i in 1..4 with d^i f/dx^i nonzero at the
    optimum for at least 99% of probe draws.

    Derivatives are estimated by central stencils with order-matched step
    sizes; "nonzero" means exceeding ``rel_tol`` times the largest derivative
    magnitude seen at the probe point (and an absolute floor).
    """
    if goal.decision_dim != 1 or goal.param_dim != 1:
        raise ValueError("smoothness-order detection is scalar-only (d = p = 1)")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    from .sources import sample  # local import to avoid a cycle

    G = sample(source, probes, seed)
    eps = np.finfo(float).eps
    hits = np.zeros(4, dtype=int)
    for g in G:
        x0 = float(np.atleast_1d(goal.decide(np.atleast_1d(g)))[0])
        f = lambda x: float(goal.evaluate(np.array([x]), np.atleast_1d(g)))
        ds, floors = [], []
        fscale = 1e-12
        for order in (1, 2, 3, 4):
            h = max(eps ** (1.0 / (order + 2)), eps ** (1.0 / (order + 2)) * abs(x0))
            lo, hi = goal.decision_set.lo[0], goal.decision_set.hi[0]
            if x0 - 2 * h < lo or x0 + 2 * h > hi:
                h = max(min(h, (x0 - lo) / 2.0, (hi - x0) / 2.0), 1e-12)
            fm2, fm1, f0, fp1, fp2 = (f(x0 + k * h) for k in (-2, -1, 0, 1, 2))
            fscale = max(fscale, abs(f0), abs(fp2), abs(fm2))
            if order == 1:
                d = (fp1 - fm1) / (2 * h)
            elif order == 2:
                d = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h * h)
            elif order == 3:
                d = (fp2 - 2 * fp1 + 2 * fm1 - fm2) / (2 * h**3)
            else:
                d = (fp2 - 4 * fp1 + 6 * f0 - 4 * fm1 + fm2) / h**4
            ds.append(abs(d))
            floors.append(64.0 * fscale * eps / h**order)
        scale = max(ds)
        for i in range(4):
            # nonzero: dominant relative to the other orders and clear of the
            # cancellation noise floor of the order-i stencil
            if ds[i] > rel_tol * scale and ds[i] > floors[i]:
                hits[i] += 1
    need = math.ceil(0.99 * probes)
    for i in range(4):
        if hits[i] >= need:
            return i + 1
    raise UnsupportedGoalError(
        f"no derivative order <= 4 is nonzero at 99% of probes for {goal.name}"
    )


# ---------------------------------------------------------------------------
# shared solvers for built-in decision rules
# ---------------------------------------------------------------------------
def water_fill_rows(G: np.ndarray, p_max: float, sigma2: float,
                    tol: float = 1e-10) -> np.ndarray:
    """Per-row water level allocation x_i = max(0, mu - sigma2/g_i) with
    sum_i x_i = p_max: bisection on mu to ``tol``, then one exact averaging
    step over the bracketed active set to kill the residual bias."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    inv = sigma2 / np.maximum(G, 1e-300)
    lo = inv.min(axis=1)
    hi = inv.max(axis=1) + p_max
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        tot = np.maximum(mu[:, None] - inv, 0.0).sum(axis=1)
        high = tot > p_max
        hi = np.where(high, mu, hi)
        lo = np.where(high, lo, mu)
        if np.all(hi - lo < tol):
            break
    mu = 0.5 * (lo + hi)
    active = mu[:, None] > inv
    k = np.maximum(active.sum(axis=1), 1)
    mu = (p_max + np.where(active, inv, 0.0).sum(axis=1)) / k
    return np.maximum(mu[:, None] - inv, 0.0)


def fill_valleys_rows(G: np.ndarray, energy: float) -> np.ndarray:
    """x = (c - g)+ with sum x = energy: exact level from the sorted cumulative
    sums (the stationarity condition equalizes the filled components)."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n, p = G.shape
    Gs = np.sort(G, axis=1)
    csum = np.cumsum(Gs, axis=1)
    k = np.arange(1, p + 1)
    # level if exactly the j smallest entries are active
    levels = (energy + csum) / k
    # feasible: level <= next-smallest entry (or j == p)
    nxt = np.concatenate([Gs[:, 1:], np.full((n, 1), np.inf)], axis=1)
    ok = levels <= nxt + 1e-12
    jstar = np.argmax(ok, axis=1)  # smallest feasible j
    c = levels[np.arange(n), jstar]
    return np.maximum(c[:, None] - G, 0.0)


def _project_budget(x: np.ndarray, p_max: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= p_max}."""
    y = np.maximum(x, 0.0)
    if y.sum() <= p_max:
        return y
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    idx = np.nonzero(u * np.arange(1, len(y) + 1) > (css - p_max))[0]
    rho = idx[-1] if len(idx) else 0
    theta = (css[rho] - p_max) / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def projected_descent(fn, grad, x0: np.ndarray, project, max_iters: int = 300,
                      step_tol: float = 1e-9, armijo_c: float = 1e-4,
                      beta: float = 0.5) -> np.ndarray:
    """Monotone projected gradient descent with backtracking line search."""
    x = project(np.asarray(x0, dtype=float))
    fx = fn(x)
    r = 1.0
    for _ in range(max_iters):
        gr = grad(x)
        r_try = min(r * 2.0, 1e6)
        accepted = False
        for _ in range(60):
            xn = project(x - r_try * gr)
            fnv = fn(xn)
            if fnv <= fx + armijo_c * float(gr @ (xn - x)) or fnv < fx - 1e-15:
                accepted = True
                break
            r_try *= beta
        if not accepted:
            break
        step = float(np.linalg.norm(xn - x))
        x, fx, r = xn, fnv, r_try
        if step < step_tol:
            break
    return x


# ---------------------------------------------------------------------------
# built-in goals
# ---------------------------------------------------------------------------
def _positive(params, key, default):
    v = float(params.pop(key, default))
    if not (v > 0):
        raise GoalParameterError(f"{key} must be positive, got {v}")
    return v


def _scalar_quadratic(params) -> GoalModel:
    dset = DecisionSet.box(-np.inf, np.inf, 1)
    der = GoalDerivatives(
        grad_x=lambda x, g: 2.0 * (x - g),
        hess_x=lambda x, g: np.array([[2.0]]),
        jac_chi=lambda g: np.array([[1.0]]),
        hess_chi=lambda g: np.zeros((1, 1, 1)),
        scalar_weight_rows=lambda G: np.full(np.asarray(G).reshape(-1).shape, 2.0),
        weight_rows=lambda G: (
            np.full((len(np.atleast_2d(G)), 1, 1), 2.0),
            np.zeros((len(np.atleast_2d(G)), 1, 1)),
        ),
    )
    return GoalModel(
        name="scalar-quadratic", decision_dim=1, param_dim=1,
        evaluate=lambda x, g: float((np.asarray(x).reshape(()) - np.asarray(g).reshape(())) ** 2),
        decide=lambda g: np.atleast_1d(np.asarray(g, dtype=float)).copy(),
        decide_rows=lambda G: np.atleast_2d(np.asarray(G, dtype=float)).copy(),
        evaluate_rows=lambda X, G: ((np.asarray(X) - np.asarray(G)) ** 2).reshape(len(X), -1).sum(axis=1),
        decision_set=dset, derivatives=der,
    )


def _scalar_log(params) -> GoalModel:
    b = _positive(params, "gain", 10.0)
    dset = DecisionSet.box(0.0, np.inf, 1)

    def f(x, g):
        x = float(np.asarray(x).reshape(()))
        g = float(np.asarray(g).reshape(()))
        return x - math.log1p(b * g * x)

    def chi(g):
        g = np.atleast_1d(np.asarray(g, dtype=float))
        return np.maximum(0.0, 1.0 - 1.0 / (b * g))

    def weight(G):
        g = np.asarray(G, dtype=float).reshape(-1)
        # chi' = 1/(b g^2), f''(chi) = 1 on the smooth branch g > 1/b
        w = np.where(g > 1.0 / b, 1.0 / (b * g * g) ** 2, 0.0)
        return w

    der = GoalDerivatives(
        grad_x=lambda x, g: np.atleast_1d(1.0 - b * g / (1.0 + b * g * x)),
        hess_x=lambda x, g: np.atleast_2d((b * g) ** 2 / (1.0 + b * g * x) ** 2),
        jac_chi=lambda g: np.atleast_2d(np.where(g > 1.0 / b, 1.0 / (b * g * g), 0.0)),
        hess_chi=lambda g: np.where(g > 1.0 / b, -2.0 / (b * g**3), 0.0).reshape(1, 1, 1),
        scalar_weight_rows=weight,
    )
    return GoalModel(
        name="scalar-log", decision_dim=1, param_dim=1,
        evaluate=f, decide=chi,
        decide_rows=lambda G: chi(np.asarray(G).reshape(-1)).reshape(-1, 1),
        evaluate_rows=lambda X, G: (
            X.reshape(-1) - np.log1p(b * G.reshape(-1) * X.reshape(-1))
        ),
        decision_set=dset, derivatives=der, params={"gain": b},
    )


def _scalar_ee(params) -> GoalModel:
    c = _positive(params, "c", 1.0)
    eta = float(params.pop("eta", 1.0))
    if eta < 1.0:
        raise GoalParameterError(f"eta must be >= 1, got {eta}")
    dset = DecisionSet.box(0.0, np.inf, 1)

    def f(x, g):
        x = float(np.asarray(x).reshape(()))
        g = float(np.asarray(g).reshape(()))
        if x <= 0:
            return 0.0
        return -math.exp(-c / (g * x)) / x**eta

    def chi(g):
        g = np.atleast_1d(np.asarray(g, dtype=float))
        return c / (eta * g)

    def f2_at_chi(g):
        # d^2/dx^2 of -exp(-A/x) x^-eta at x = A/eta, A = c/g
        A = c / g
        return math.exp(-eta) * eta ** (eta + 3) * A ** (-eta - 2)

    def weight(G):
        g = np.asarray(G, dtype=float).reshape(-1)
        A = c / g
        f2 = np.exp(-eta) * eta ** (eta + 3) * A ** (-eta - 2)
        return (c / (eta * g * g)) ** 2 * f2

    def grad_x(x, g):
        x = float(np.asarray(x).reshape(()))
        g = float(np.asarray(g).reshape(()))
        A = c / g
        return np.atleast_1d(-math.exp(-A / x) * x ** (-eta - 2) * (A - eta * x))

    def hess_x(x, g):
        x = float(np.asarray(x).reshape(()))
        g = float(np.asarray(g).reshape(()))
        A = c / g
        val = -math.exp(-A / x) * x ** (-eta - 4) * (
            A * A - (2 * eta + 2) * A * x + (eta * eta + eta) * x * x
        )
        return np.atleast_2d(val)

    der = GoalDerivatives(
        grad_x=grad_x, hess_x=hess_x,
        jac_chi=lambda g: np.atleast_2d(-c / (eta * g * g)),
        hess_chi=lambda g: np.asarray(2.0 * c / (eta * g**3)).reshape(1, 1, 1),
        scalar_weight_rows=weight,
    )

    def eval_rows(X, G):
        x = np.asarray(X, dtype=float).reshape(-1)
        g = np.asarray(G, dtype=float).reshape(-1)
        with np.errstate(divide="ignore"):
            out = np.where(x > 0, -np.exp(-c / np.maximum(g * x, 1e-300)) / np.maximum(x, 1e-300) ** eta, 0.0)
        return out

    return GoalModel(
        name="scalar-ee", decision_dim=1, param_dim=1,
        evaluate=f, decide=chi,
        decide_rows=lambda G: chi(np.asarray(G).reshape(-1)).reshape(-1, 1),
        evaluate_rows=eval_rows,
        decision_set=dset, derivatives=der, params={"c": c, "eta": eta},
    )


# exponent of the sigmoidal efficiency curve; the stationarity condition
# L t e^-t = 1 - e^-t reduces to e^t = 1 + L t
_SIGMOID_L = 10
_SIGMOID_T = brentq(lambda t: math.exp(t) - 1.0 - _SIGMOID_L * t, 1.0, 10.0, xtol=1e-14)


def _sigmoid_v(t, L=_SIGMOID_L):
    return (1.0 - np.exp(-t)) ** L / t


def _sigmoid_vpp(t, L=_SIGMOID_L):
    s = 1.0 - np.exp(-t)
    e = np.exp(-t)
    return (L * (L - 1) * s ** (L - 2) * e * e / t
            - L * s ** (L - 1) * e / t
            - 2 * L * s ** (L - 1) * e / t**2
            + 2 * s**L / t**3)


def _sigmoid_vp(t, L=_SIGMOID_L):
    s = 1.0 - np.exp(-t)
    return s ** (L - 1) * (L * np.exp(-t) * t - s) / t**2


def _scalar_sigmoid10(params) -> GoalModel:
    tstar = _SIGMOID_T
    dset = DecisionSet.box(0.0, np.inf, 1)

    def f(x, g):
        x = float(np.asarray(x).reshape(()))
        g = float(np.asarray(g).reshape(()))
        if x <= 0:
            return 0.0
        return -((1.0 - math.exp(-g * x)) ** _SIGMOID_L) / x

    def chi(g):
        g = np.atleast_1d(np.asarray(g, dtype=float))
        return tstar / g

    def weight(G):
        g = np.asarray(G, dtype=float).reshape(-1)
        f2 = -(g**3) * _sigmoid_vpp(tstar)
        return (tstar / (g * g)) ** 2 * f2

    def _gx(x, g):
        return float(np.asarray(g).reshape(())), float(np.asarray(x).reshape(()))

    der = GoalDerivatives(
        # f(x; g) = -g v(g x): chain rule through the scale-free profile v
        grad_x=lambda x, g: np.atleast_1d(-(_gx(x, g)[0] ** 2) * _sigmoid_vp(_gx(x, g)[0] * _gx(x, g)[1])),
        hess_x=lambda x, g: np.atleast_2d(-(_gx(x, g)[0] ** 3) * _sigmoid_vpp(_gx(x, g)[0] * _gx(x, g)[1])),
        jac_chi=lambda g: np.atleast_2d(-tstar / (np.asarray(g, dtype=float) ** 2)),
        hess_chi=lambda g: np.asarray(2.0 * tstar / np.asarray(g, dtype=float) ** 3).reshape(1, 1, 1),
        scalar_weight_rows=weight,
    )

    def eval_rows(X, G):
        x = np.asarray(X, dtype=float).reshape(-1)
        g = np.asarray(G, dtype=float).reshape(-1)
        return np.where(x > 0, -((1.0 - np.exp(-g * x)) ** _SIGMOID_L) / np.maximum(x, 1e-300), 0.0)

    return GoalModel(
        name="scalar-sigmoid10", decision_dim=1, param_dim=1,
        evaluate=f, decide=chi,
        decide_rows=lambda G: chi(np.asarray(G).reshape(-1)).reshape(-1, 1),
        evaluate_rows=eval_rows,
        decision_set=dset, derivatives=der, params={"tstar": tstar},
    )


def _quadratic_2d(params) -> GoalModel:
    dset = DecisionSet.box(-np.inf, np.inf, 2)
    H = np.array([[4.0, -2.0], [-2.0, 4.0]])

    def targets(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        u = G[:, 0] * G[:, 1]
        return 2 * u - 0.5 * u**2, u**2 - u

    def f(x, g):
        x = np.asarray(x, dtype=float).reshape(-1)
        h1, h2 = targets(g)
        return float((x[0] - h1[0]) ** 2 + (x[1] - h2[0]) ** 2 + (x[0] - x[1]) ** 2)

    def eval_rows(X, G):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        h1, h2 = targets(G)
        return (X[:, 0] - h1) ** 2 + (X[:, 1] - h2) ** 2 + (X[:, 0] - X[:, 1]) ** 2

    def eval_grid(X, G):
        h1, h2 = targets(G)
        return ((X[:, 0:1] - h1[None, :]) ** 2 + (X[:, 1:2] - h2[None, :]) ** 2
                + ((X[:, 0] - X[:, 1]) ** 2)[:, None])

    def chi_rows(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        u = G[:, 0] * G[:, 1]
        return np.stack([u, 0.5 * u**2], axis=1)

    def grad_x(x, g):
        x = np.asarray(x, dtype=float).reshape(-1)
        h1, h2 = targets(g)
        return np.array([
            2 * (x[0] - h1[0]) + 2 * (x[0] - x[1]),
            2 * (x[1] - h2[0]) - 2 * (x[0] - x[1]),
        ])

    def jac_chi(g):
        g = np.asarray(g, dtype=float).reshape(-1)
        u = g[0] * g[1]
        return np.array([[g[1], g[0]], [u * g[1], u * g[0]]])

    def hess_chi(g):
        g = np.asarray(g, dtype=float).reshape(-1)
        return np.stack([
            np.array([[0.0, 1.0], [1.0, 0.0]]),
            np.array([[g[1] ** 2, 2 * g[0] * g[1]], [2 * g[0] * g[1], g[0] ** 2]]),
        ])

    def weight_rows(G):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        u = G[:, 0] * G[:, 1]
        coef = 4.0 * (u * u - u + 1.0)
        b = G[:, ::-1]
        A = coef[:, None, None] * np.einsum("ni,nj->nij", b, b)
        return A, np.zeros_like(A)

    der = GoalDerivatives(
        grad_x=grad_x,
        hess_x=lambda x, g: H.copy(),
        jac_chi=jac_chi,
        hess_chi=hess_chi,
        weight_rows=weight_rows,
    )
    return GoalModel(
        name="quadratic-2d", decision_dim=2, param_dim=2,
        evaluate=f,
        decide=lambda g: chi_rows(g)[0],
        decide_rows=chi_rows,
        evaluate_rows=eval_rows,
        evaluate_grid=eval_grid,
        decision_set=dset, derivatives=der,
    )


def _se_multiband(params) -> GoalModel:
    S = int(params.pop("bands", params.pop("S", 2)))
    if S < 1:
        raise GoalParameterError(f"bands must be >= 1, got {S}")
    p_max = _positive(params, "p_max", 5.0)
    sigma2 = _positive(params, "sigma2", 1.0)
    dset = DecisionSet.box(0.0, np.inf, S, sum_max=p_max)

    def eval_rows(X, G):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = np.atleast_2d(np.asarray(G, dtype=float))
        return -np.log1p(X * G / sigma2).sum(axis=1)

    def chi_rows(G):
        return water_fill_rows(G, p_max, sigma2)

    def grad_x(x, g):
        x = np.asarray(x, dtype=float).reshape(-1)
        g = np.asarray(g, dtype=float).reshape(-1)
        return -(g / sigma2) / (1.0 + x * g / sigma2)

    def hess_x(x, g):
        x = np.asarray(x, dtype=float).reshape(-1)
        g = np.asarray(g, dtype=float).reshape(-1)
        return np.diag((g / sigma2) ** 2 / (1.0 + x * g / sigma2) ** 2)

    def active_set(g):
        x = chi_rows(g[None])[0]
        return x > 1e-11

    def jac_chi(g):
        g = np.asarray(g, dtype=float).reshape(-1)
        act = active_set(g)
        k = int(act.sum())
        J = np.zeros((S, S))
        if k == 0:
            return J
        for j in np.nonzero(act)[0]:
            J[act, j] = -sigma2 / (g[j] ** 2 * k)
            J[j, j] += sigma2 / g[j] ** 2
        return J

    def hess_chi(g):
        g = np.asarray(g, dtype=float).reshape(-1)
        act = active_set(g)
        k = int(act.sum())
        out = np.zeros((S, S, S))
        if k == 0:
            return out
        for i in np.nonzero(act)[0]:
            for j in np.nonzero(act)[0]:
                out[i, j, j] = 2.0 * sigma2 / (k * g[j] ** 3)
            out[i, i, i] -= 2.0 * sigma2 / g[i] ** 3
        return out

    der = GoalDerivatives(grad_x=grad_x, hess_x=hess_x, jac_chi=jac_chi, hess_chi=hess_chi)
    return GoalModel(
        name="se-multiband", decision_dim=S, param_dim=S,
        evaluate=lambda x, g: float(eval_rows(x, g)[0]),
        decide=lambda g: chi_rows(g)[0],
        decide_rows=chi_rows,
        evaluate_rows=eval_rows,
        decision_set=dset, derivatives=der,
        params={"bands": S, "p_max": p_max, "sigma2": sigma2},
    )


def _ee_multiband(params) -> GoalModel:
    S = int(params.pop("bands", params.pop("S", 2)))
    if S < 1:
        raise GoalParameterError(f"bands must be >= 1, got {S}")
    c = _positive(params, "c", 1.0)
    p_max = _positive(params, "p_max", 5.0)
    dset = DecisionSet.box(0.0, np.inf, S, sum_max=p_max)

    def eval_rows(X, G):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = np.atleast_2d(np.asarray(G, dtype=float))
        with np.errstate(divide="ignore"):
            t = np.where(X * G > 0, np.exp(-c / np.maximum(X * G, 1e-300)), 0.0)
        den = X.sum(axis=1)
        return np.where(den > 0, -t.sum(axis=1) / np.maximum(den, 1e-300), 0.0)

    def f(x, g):
        return float(eval_rows(x, g)[0])

    def grad_x(x, g):
        x = np.asarray(x, dtype=float).reshape(-1)
        g = np.asarray(g, dtype=float).reshape(-1)
        xs = np.maximum(x, 1e-300)
        with np.errstate(divide="ignore"):
            t = np.where(x * g > 0, np.exp(-c / np.maximum(xs * g, 1e-300)), 0.0)
        N = t.sum()
        D = max(x.sum(), 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            dN = np.where(x > 1e-12, t * c / np.maximum(xs * xs * g, 1e-300), 0.0)
        return -(dN * D - N) / D**2

    def decide_rows(G):
        """Best single-band allocation, then a monotone projected-gradient
        polish (the ratio maximizer concentrates power in one band; the
        descent pass guards parameter corners where it would not)."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        n = len(G)
        i = np.argmax(G, axis=1)
        X = np.zeros_like(G)
        gmax = G[np.arange(n), i]
        X[np.arange(n), i] = np.minimum(c / np.maximum(gmax, 1e-300), p_max)
        f0 = eval_rows(X, G)
        # vectorized descent: all rows share the step loop, masked acceptance
        r = np.full(n, 0.5)
        for _ in range(40):
            gr = np.stack([grad_x(X[k], G[k]) for k in range(n)])
            improved = np.zeros(n, dtype=bool)
            Xn = X.copy()
            rr = r.copy()
            for _ in range(30):
                cand = np.stack([
                    _project_budget(X[k] - rr[k] * gr[k], p_max) for k in range(n)
                ])
                fc = eval_rows(cand, G)
                acc = (fc < f0 - 1e-14) & ~improved
                Xn[acc] = cand[acc]
                f0 = np.where(acc, fc, f0)
                improved |= acc
                rr = np.where(improved, rr, rr * 0.5)
                if improved.all() or rr.max() < 1e-12:
                    break
            if not improved.any():
                break
            step = np.linalg.norm(Xn - X, axis=1)
            X, r = Xn, np.where(improved, rr * 2, r)
            if step.max() < 1e-10:
                break
        return X

    der = GoalDerivatives(grad_x=grad_x)
    return GoalModel(
        name="ee-multiband", decision_dim=S, param_dim=S,
        evaluate=f,
        decide=lambda g: decide_rows(np.atleast_2d(g))[0],
        decide_rows=decide_rows,
        evaluate_rows=eval_rows,
        decision_set=dset, derivatives=der,
        params={"bands": S, "c": c, "p_max": p_max},
    )


def _pcs_lp(params) -> GoalModel:
    P = float(params.pop("P", params.pop("exponent", 4.0)))
    if P < 1:
        raise GoalParameterError(f"P must be >= 1, got {P}")
    energy = _positive(params, "energy", 30.0)
    dim = int(params.pop("dim", 24))
    if dim < 1:
        raise GoalParameterError(f"dim must be >= 1, got {dim}")
    dset = DecisionSet.box(0.0, np.inf, dim, sum_min=energy)

    def eval_rows(X, G):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = np.atleast_2d(np.asarray(G, dtype=float))
        w = np.maximum(X + G, 0.0)
        # scale out the max for overflow safety at large P
        m = np.maximum(w.max(axis=1), 1e-300)
        return m * ((w / m[:, None]) ** P).sum(axis=1) ** (1.0 / P)

    def eval_grid(X, G):
        w = np.maximum(X[:, None, :] + G[None, :, :], 0.0)
        m = np.maximum(w.max(axis=2), 1e-300)
        return m * ((w / m[:, :, None]) ** P).sum(axis=2) ** (1.0 / P)

    def decide_rows(G):
        return fill_valleys_rows(G, energy)

    def grad_x(x, g):
        w = np.maximum(np.asarray(x, dtype=float) + np.asarray(g, dtype=float), 1e-300)
        m = w.max()
        s = ((w / m) ** P).sum()
        return (w / m) ** (P - 1) * s ** (1.0 / P - 1.0)

    def hess_x(x, g):
        w = np.maximum(np.asarray(x, dtype=float) + np.asarray(g, dtype=float), 1e-300)
        m = w.max()
        wn = w / m
        s = (wn**P).sum()
        d = (P - 1) / m * (
            np.diag(wn ** (P - 2)) * s ** (1.0 / P - 1.0)
            - np.outer(wn ** (P - 1), wn ** (P - 1)) * s ** (1.0 / P - 2.0)
        )
        return d

    def jac_chi(g):
        g = np.asarray(g, dtype=float).reshape(-1)
        x = decide_rows(g[None])[0]
        act = x > 1e-11
        k = int(act.sum())
        J = np.zeros((dim, dim))
        if k:
            J[np.ix_(act, act)] = 1.0 / k
            J[act, act] -= 1.0
        return J

    der = GoalDerivatives(
        grad_x=grad_x, hess_x=hess_x, jac_chi=jac_chi,
        hess_chi=lambda g: np.zeros((dim, dim, dim)),  # piecewise linear rule
    )
    return GoalModel(
        name="pcs-lp", decision_dim=dim, param_dim=dim,
        evaluate=lambda x, g: float(eval_rows(x, g)[0]),
        decide=lambda g: decide_rows(g)[0],
        decide_rows=decide_rows,
        evaluate_rows=eval_rows,
        evaluate_grid=eval_grid,
        decision_set=dset, derivatives=der,
        params={"P": P, "energy": energy, "dim": dim},
    )


def euclidean_quadratic(dim: int) -> GoalModel:
    """f(x; g) = ||x - g||^2 in any dimension; the distortion special case."""
    dset = DecisionSet.box(-np.inf, np.inf, dim)

    def weight_rows(G):
        n = len(np.atleast_2d(G))
        A = np.broadcast_to(2.0 * np.eye(dim), (n, dim, dim)).copy()
        return A, np.zeros_like(A)

    der = GoalDerivatives(
        grad_x=lambda x, g: 2.0 * (np.asarray(x, dtype=float) - np.asarray(g, dtype=float)),
        hess_x=lambda x, g: 2.0 * np.eye(dim),
        jac_chi=lambda g: np.eye(dim),
        hess_chi=lambda g: np.zeros((dim, dim, dim)),
        weight_rows=weight_rows,
    )
    return GoalModel(
        name=f"euclidean-quadratic-{dim}d", decision_dim=dim, param_dim=dim,
        evaluate=lambda x, g: float(((np.asarray(x) - np.asarray(g)) ** 2).sum()),
        decide=lambda g: np.asarray(g, dtype=float).reshape(-1).copy(),
        decide_rows=lambda G: np.atleast_2d(np.asarray(G, dtype=float)).copy(),
        evaluate_rows=lambda X, G: ((np.atleast_2d(X) - np.atleast_2d(G)) ** 2).sum(axis=1),
        evaluate_grid=lambda X, G: ((np.atleast_2d(X)[:, None, :] - np.atleast_2d(G)[None, :, :]) ** 2).sum(axis=2),
        decision_set=dset, derivatives=der,
    )


_REGISTRY = {
    "scalar-quadratic": _scalar_quadratic,
    "scalar-log": _scalar_log,
    "scalar-ee": _scalar_ee,
    "scalar-sigmoid10": _scalar_sigmoid10,
    "quadratic-2d": _quadratic_2d,
    "se-multiband": _se_multiband,
    "ee-multiband": _ee_multiband,
    "pcs-lp": _pcs_lp,
}


def builtin_goal_ids() -> Sequence[str]:
    return tuple(_REGISTRY)


def builtin_goal(name: str, **params) -> GoalModel:
    """Instantiate a registered goal; raises on unknown ids or bad params."""
    if name not in _REGISTRY:
        raise UnknownGoalError(f"unknown goal id {name!r}; known: {sorted(_REGISTRY)}")
    params = dict(params)
    goal = _REGISTRY[name](params)
    if params:
        raise GoalParameterError(f"unknown parameters for {name}: {sorted(params)}")
    return goal
