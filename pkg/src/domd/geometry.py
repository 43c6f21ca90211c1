"""Mirror maps, Bregman divergences, feasible sets, and the mirror step.

Two regularizer geometries are supported: the Euclidean half-squared-norm
(mu = mu' = 1) and negative entropy restricted to the eps-interior of the
probability simplex (mu = 1, mu' = 1/eps, since the entropy Hessian is
diag(1/x_i)). The mirror step is computed through its dual-step identity:
walk in the dual via grad r, subtract eta * g, map back through grad r*,
then Bregman-project onto the feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MirrorMap",
    "FeasibleSet",
    "bregman",
    "mirror_descent_step",
    "validate_step_size",
    "project",
]

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class MirrorMap:
    """Regularizer geometry: kind is 'euclidean' or 'entropy'."""

    kind: str
    eps: float = 1e-6

    def __post_init__(self) -> None:
        if self.kind not in ("euclidean", "entropy"):
            raise ValueError(f"unknown mirror map '{self.kind}'")
        if self.kind == "entropy" and not (0.0 < self.eps < 1.0):
            raise ValueError(f"entropy interior clip must be in (0, 1), got {self.eps}")

    @property
    def mu(self) -> float:
        return 1.0

    @property
    def mu_prime(self) -> float:
        return 1.0 if self.kind == "euclidean" else 1.0 / self.eps


@dataclass(frozen=True)
class FeasibleSet:
    """Compact convex feasible set: ball(R), box(lo, hi), or simplex.

    ``dim`` is needed to report the exact max-norm radius for boxes and the
    eps-interior simplex. The simplex uses the mirror map's interior clip so
    entropy gradients stay finite.
    """

    kind: str
    dim: int
    r: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    eps: float = 1e-6

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if self.kind == "ball":
            if self.r <= 0:
                raise ValueError(f"ball radius must be positive, got {self.r}")
        elif self.kind == "box":
            if self.lo >= self.hi:
                raise ValueError(f"box requires lo < hi, got [{self.lo}, {self.hi}]")
        elif self.kind == "simplex":
            if not (0.0 < self.eps <= 1.0 / self.dim):
                raise ValueError(
                    f"simplex interior clip must be in (0, 1/d], got {self.eps} with d={self.dim}"
                )
        else:
            raise ValueError(f"unknown feasible set '{self.kind}'")

    @property
    def radius(self) -> float:
        """Exact max Euclidean norm over the set."""
        if self.kind == "ball":
            return self.r
        if self.kind == "box":
            return float(np.sqrt(self.dim) * max(abs(self.lo), abs(self.hi)))
        # most concentrated interior-simplex point: one big coordinate, rest at eps
        big = 1.0 - (self.dim - 1) * self.eps
        return float(np.sqrt(big**2 + (self.dim - 1) * self.eps**2))

    def center(self) -> np.ndarray:
        if self.kind == "simplex":
            return np.full(self.dim, 1.0 / self.dim)
        return project(self, np.zeros(self.dim))

    def contains(self, x: np.ndarray, tol: float = _FEAS_TOL) -> bool:
        return bool(np.linalg.norm(np.asarray(x, float) - project(self, x)) <= tol)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the standard probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / idx > 0
    rho = int(idx[cond][-1])
    tau = (css[rho - 1] - 1.0) / rho
    return np.maximum(v - tau, 0.0)


def project(feasible: FeasibleSet, x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the feasible set; identity on members."""
    v = np.asarray(x, dtype=float)
    if v.shape != (feasible.dim,):
        raise ValueError(f"expected vector of dimension {feasible.dim}, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite vector")
    if feasible.kind == "ball":
        nrm = float(np.linalg.norm(v))
        if nrm <= feasible.r:
            return v.copy()
        return v * (feasible.r / nrm)
    if feasible.kind == "box":
        return np.clip(v, feasible.lo, feasible.hi)
    # eps-interior simplex {x >= eps, sum x = 1} is the standard simplex
    # shifted by eps*1 and scaled by (1 - d*eps); projection commutes
    d, eps = feasible.dim, feasible.eps
    scale = 1.0 - d * eps
    if scale <= 0:
        return np.full(d, 1.0 / d)
    z = _project_simplex((v - eps) / scale)
    return eps + scale * z


def bregman(mirror: MirrorMap, x: np.ndarray, y: np.ndarray) -> float:
    """Bregman divergence D_r(x, y) of the map's regularizer."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same shape")
    if mirror.kind == "euclidean":
        return 0.5 * float(np.dot(x - y, x - y))
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("entropy map with nonpositive coordinate")
    return float(np.sum(x * np.log(x / y)) - x.sum() + y.sum())


def validate_step_size(eta: float, lam: float, mirror: MirrorMap) -> float:
    """Check eta against the (mu'-mu)/lambda < eta < mu'/lambda window.

    Returns the contraction factor rho = (mu' - eta*lambda)/mu, which the
    window guarantees lies in (0, 1).
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    lo = (mirror.mu_prime - mirror.mu) / lam
    hi = mirror.mu_prime / lam
    if not lo < eta < hi:
        raise ValueError(
            f"step size {eta} outside the window ({lo:.6g}, {hi:.6g}) "
            f"for lambda={lam}, mu={mirror.mu}, mu'={mirror.mu_prime}"
        )
    return (mirror.mu_prime - eta * lam) / mirror.mu


def _clip_to_interior_simplex(w: np.ndarray, eps: float) -> np.ndarray:
    """KL projection of nonnegative weights onto {x >= eps, sum x = 1}.

    KKT form: x_i = max(eps, c * w_i) with c chosen so the total is 1;
    water-filling over the fixed set terminates in at most d passes.
    """
    d = w.size
    fixed = np.zeros(d, dtype=bool)
    for _ in range(d):
        free_mass = 1.0 - eps * fixed.sum()
        denom = w[~fixed].sum()
        if denom <= 0:
            return np.full(d, 1.0 / d)
        c = free_mass / denom
        newly = (~fixed) & (c * w < eps)
        if not newly.any():
            x = np.where(fixed, eps, c * w)
            return x
        fixed |= newly
    return np.full(d, eps / (d * eps))


def mirror_descent_step(
    mirror: MirrorMap,
    feasible: FeasibleSet,
    eta: float,
    g: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """Constrained mirror step: argmin_x <x, g> + D_r(x, y)/eta.

    Euclidean map: Euclidean projection of y - eta*g. Entropy map on the
    simplex: exponentiated-gradient reweighting of y followed by the KL
    clip back into the eps-interior.
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient must be finite")
    if not feasible.contains(y):
        raise ValueError("mirror step from infeasible point")
    if mirror.kind == "euclidean":
        return project(feasible, y - eta * g)
    if feasible.kind != "simplex":
        raise ValueError("entropy map requires the simplex feasible set")
    # dual step in log space, shifted for overflow safety; the shift cancels
    # in the renormalization
    logw = np.log(y) - eta * g
    w = np.exp(logw - logw.max())
    return _clip_to_interior_simplex(w, feasible.eps)
