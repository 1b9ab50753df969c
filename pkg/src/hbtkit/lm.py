"""Levenberg-Marquardt least squares with box constraints.

Minimises sum(((y - f(x; p)) / sigma)**2).  Steps are projected onto the
box, and the damping follows Marquardt's scaling by the diagonal of J^T J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitDataError, HbtError, SingularJacobianError

_RANK_RTOL = 1e-8


@dataclass
class FitResult:
    params: dict
    stderr: dict | None
    residual_norm: float
    converged: bool
    iterations: int
    covariance: np.ndarray | None = None
    derived: dict = field(default_factory=dict)
    message: str = ""

    @property
    def names(self):
        return tuple(self.params)

    def values(self):
        return np.array(list(self.params.values()))

    def to_dict(self):
        out = {
            "params": dict(self.params),
            "stderr": dict(self.stderr) if self.stderr is not None else None,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
        }
        if self.derived:
            out["derived"] = {k: _jsonable(v) for k, v in self.derived.items()}
        return out


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if hasattr(v, "__dataclass_fields__"):
        return {k: _jsonable(getattr(v, k)) for k in v.__dataclass_fields__}
    return v


def numerical_jacobian(model, x, p, rel_step=1e-6):
    """Central-difference Jacobian of ``model(x, p)`` with respect to ``p``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1e-8)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        # divide by the step actually representable in floating point
        cols.append((model(x, up) - model(x, dn)) / (up[i] - dn[i]))
    return np.column_stack(cols)


def nlls_minimize(
    model,
    x,
    y,
    sigma,
    init,
    names=None,
    bounds=None,
    jac=None,
    max_iter=500,
    xtol=1e-10,
    ftol=1e-12,
):
    """Weighted nonlinear least squares.

    Parameters
    ----------
    model : callable
        ``model(x, p) -> y_model`` with ``p`` a 1-D array.
    x, y, sigma : array_like
        Data and per-point standard deviations.
    init : array_like
        Starting parameters; must satisfy ``bounds``.
    names : sequence of str, optional
        Parameter names used as keys of ``FitResult.params``.
    bounds : (lower, upper), optional
        Box constraints; use ``-inf``/``inf`` for open sides.
    jac : callable, optional
        ``jac(x, p) -> (n, m)`` analytic derivative of the model.  Central
        differences are used when absent.

    Returns
    -------
    FitResult
        ``converged`` is False when the iteration cap is hit; standard
        errors are then omitted.  Standard errors come from the inverse of
        J^T J scaled by the reduced chi-square.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    p = np.array(init, dtype=float)
    m = p.size
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(m))
    if y.size == 0:
        raise FitDataError("no data points")
    if len(names) != m:
        raise HbtError("names and init differ in length")
    if np.any(~(sigma > 0)):
        raise FitDataError("sigma must be positive")
    if bounds is None:
        lo, hi = np.full(m, -np.inf), np.full(m, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (m,))
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (m,))
    if np.any(p < lo) or np.any(p > hi):
        raise HbtError("initial parameters outside bounds")

    if jac is None:
        jac = lambda xx, pp: numerical_jacobian(model, xx, pp)  # noqa: E731

    def residuals(pp):
        return (y - model(x, pp)) / sigma

    r = residuals(p)
    cost = float(r @ r)
    if not math.isfinite(cost):
        raise FitDataError("model is not finite at the initial parameters")
    lam = 1e-3
    converged = False
    message = "iteration limit reached"
    it = 0
    while it < max_iter:
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        it += 1
        J = jac(x, p) / sigma[:, None]
        g = J.T @ r
        H = J.T @ J
        d = np.diag(H).copy()
        d[d <= 0] = max(float(d.max(initial=0.0)) * 1e-12, 1e-300)
        step_taken = False
        while lam < 1e16:
            try:
                delta = np.linalg.solve(H + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = np.clip(p + delta, lo, hi)
            r_new = residuals(p_new)
            cost_new = float(r_new @ r_new)
            if math.isfinite(cost_new) and cost_new <= cost:
                step_taken = True
                break
            lam *= 10
        if not step_taken:
            converged, message = True, "no further reduction possible"
            break
        dp = np.linalg.norm(p_new - p)
        dcost = cost - cost_new
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        if dp <= xtol * (np.linalg.norm(p) + xtol):
            converged, message = True, "relative parameter change below tolerance"
            break
        if dcost <= ftol * cost:
            converged, message = True, "relative residual change below tolerance"
            break

    if not converged:
        return FitResult(dict(zip(names, p.tolist())), None, cost, False, it, message=message)

    J = jac(x, p) / sigma[:, None]
    # rank on unit-norm columns, so parameter scales do not matter
    norms = np.linalg.norm(J, axis=0)
    sv = np.linalg.svd(J / np.where(norms > 0, norms, 1.0), compute_uv=False)
    if np.any(norms == 0) or sv[-1] < _RANK_RTOL * sv[0]:
        raise SingularJacobianError(
            f"Jacobian rank deficient at solution for parameters {names}"
        )
    if cost > 0:
        # one undamped Gauss-Newton step removes the residual damping bias
        delta = np.linalg.lstsq(J, r, rcond=None)[0]
        p_new = np.clip(p + delta, lo, hi)
        r_new = residuals(p_new)
        cost_new = float(r_new @ r_new)
        # near the optimum cost differences are at rounding level
        if cost_new <= cost * (1 + 1e-12):
            p, r, cost = p_new, r_new, cost_new
            J = jac(x, p) / sigma[:, None]
    params = dict(zip(names, p.tolist()))
    dof = y.size - m
    scale = cost / dof if dof > 0 else 1.0
    cov = np.linalg.inv(J.T @ J) * scale
    stderr = dict(zip(names, np.sqrt(np.maximum(np.diag(cov), 0.0)).tolist()))
    return FitResult(params, stderr, cost, True, it, covariance=cov, message=message)
