"""Large-deviation rate functional: relative-entropy form, dual form, tilts.

The pathwise cost of a grid path (c, w) is the time integral of the
per-reaction relative entropy between the observed flux rate and the
macroscopic rate,

    J = int_0^T sum_r s(wdot_r(t) | kbar_r(c(t))) dt,
    s(j | jhat) = j log(j / jhat) - j + jhat,

with boundary conventions s(0 | jhat) = jhat and s(j | 0) = +inf for j > 0.
The dual form pairs a per-reaction tilt with the flux against the
Hamiltonian H(c, zeta) = sum_r kbar_r(c) (exp(zeta_r) - 1):

    G = int_0^T [ zeta(t) . wdot(t) - H(c(t), zeta(t)) ] dt <= J,

with equality approached by the explicit four-case tilt built by
:func:`optimal_tilt`.  Both quadratures share the same finite-difference
flux rates and trapezoid weights, so the discrete inequality G <= J holds
pointwise up to roundoff.

Contraction to concentrations is the per-cell convex program
inf { sum_r s(j_r | kbar_r(c)) : Gamma j = cdot, j >= 0 }, solved through
its smooth concave dual by a safeguarded Newton method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ValidationError
from .network import ReactionNetwork
from .paths import GridPath, TiltProtocol

__all__ = [
    "rel_entropy",
    "hamiltonian",
    "RateReport",
    "evaluate_J",
    "evaluate_G",
    "optimal_tilt",
    "contraction_cell",
    "contraction_I",
    "ContractionResult",
]

# below this, a flux rate is treated as exactly zero (avoids 0*log 0)
_FLUX_ZERO = 1e-30

REASON_NEGATIVE_FLUX = "negative flux"
REASON_CONTINUITY = "continuity violation"
REASON_ABS_CONTINUITY = "absolute-continuity failure"


def rel_entropy(j: float, jhat: float) -> float:
    """Relative entropy s(j | jhat) of one flux rate against a reference rate.

    Returns ``j*log(j/jhat) - j + jhat`` for positive arguments, ``jhat``
    when j = 0, ``+inf`` when jhat = 0 < j (absolute-continuity failure)
    and 0 when both vanish.
    """
    if j < 0 or jhat < 0:
        raise ValidationError("rel_entropy arguments must be nonnegative")
    if j <= _FLUX_ZERO:
        return float(jhat)
    if jhat == 0.0:
        return math.inf
    return j * math.log(j / jhat) - j + jhat


def _rel_entropy_grid(j: np.ndarray, jhat: np.ndarray) -> np.ndarray:
    """Vectorized s(j | jhat) under the same conventions (no +inf branch)."""
    j = np.where(j <= _FLUX_ZERO, 0.0, j)
    safe_j = np.where(j > 0, j, 1.0)
    safe_hat = np.where(jhat > 0, jhat, 1.0)
    body = j * np.log(safe_j / safe_hat) - j + jhat
    return np.where(j > 0, body, jhat)


def hamiltonian(net: ReactionNetwork, c: np.ndarray, zeta: np.ndarray) -> float:
    """H(c, zeta) = sum_r kbar_r(c) (exp(zeta_r) - 1); convex in zeta, H(c, 0) = 0."""
    rates = net.macro_rates(np.asarray(c, dtype=float))
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (net.n_reactions,):
        raise ValidationError(f"expected tilt vector of length {net.n_reactions}")
    return float(rates @ np.expm1(zeta))


@dataclass
class RateReport:
    """Value of the rate functional with its per-reaction decomposition."""

    value: float
    per_reaction_breakdown: list[float] = field(default_factory=list)
    infinity_reason: str | None = None

    def to_json(self) -> dict:
        return {
            "value": self.value if math.isfinite(self.value) else "inf",
            "breakdown": self.per_reaction_breakdown,
            "infinity_reason": self.infinity_reason,
        }


def _trapezoid_columns(values: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid quadrature of each column over the uniform grid."""
    return dt * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))


def _flux_rates(path: GridPath) -> tuple[np.ndarray, np.ndarray]:
    """Shared derivative extraction: raw centered differences and their positive part."""
    raw = path.deriv_w()
    return raw, np.maximum(raw, 0.0)


def evaluate_J(net: ReactionNetwork, path: GridPath, tol: float = 1e-9) -> RateReport:
    """Relative-entropy rate functional of a grid path.

    Infinite values are reported with a reason: flux rates below ``-tol``
    anywhere, continuity residual above ``tol``, or flux flowing through a
    reaction whose macroscopic rate vanishes (beyond ``tol``).
    """
    if path.n_species != net.n_species or path.n_reactions != net.n_reactions:
        raise ValidationError("path shape does not match the network")
    raw, wdot = _flux_rates(path)
    if np.min(raw) < -tol:
        return RateReport(math.inf, [], REASON_NEGATIVE_FLUX)
    if path.continuity_residual(net.Gamma) > tol:
        return RateReport(math.inf, [], REASON_CONTINUITY)
    rates = net.macro_rates_grid(path.c)
    if np.any((rates == 0.0) & (wdot > tol)):
        return RateReport(math.inf, [], REASON_ABS_CONTINUITY)
    wdot = np.where((rates == 0.0) & (wdot <= tol), 0.0, wdot)
    density = _rel_entropy_grid(wdot, rates)
    breakdown = _trapezoid_columns(density, path.dt)
    return RateReport(float(breakdown.sum()), [float(b) for b in breakdown], None)


def evaluate_G(net: ReactionNetwork, path: GridPath, tilt: TiltProtocol) -> float:
    """Dual functional G(c, w, zeta): tilt-flux pairing minus the Hamiltonian.

    Uses the same flux extraction and quadrature as :func:`evaluate_J`, so
    G <= J holds discretely (Fenchel-Young pointwise, shared weights).
    """
    if tilt.n_reactions != net.n_reactions:
        raise ValidationError("tilt has the wrong number of reactions")
    _, wdot = _flux_rates(path)
    zeta = tilt.resampled(path.times)
    rates = net.macro_rates_grid(path.c)
    integrand = zeta * wdot - rates * np.expm1(zeta)
    return float(_trapezoid_columns(integrand, path.dt).sum())


def optimal_tilt(net: ReactionNetwork, path: GridPath, cap: float = 40.0) -> TiltProtocol:
    """Pointwise maximizing tilt for the dual functional, capped at ``cap``.

    Four cases per grid point and reaction: ``log(wdot/kbar)`` capped above
    at ``cap`` when both are positive, ``-cap`` on zero flux with positive
    rate, ``+cap`` on positive flux with zero rate, and 0 when both vanish.
    """
    if cap <= 0:
        raise ValidationError("cap must be positive")
    _, wdot = _flux_rates(path)
    rates = net.macro_rates_grid(path.c)
    zeta = np.zeros_like(wdot)
    both = (rates > 0.0) & (wdot > 0.0)
    zeta[both] = np.minimum(np.log(wdot[both] / rates[both]), cap)
    zeta[(rates > 0.0) & (wdot == 0.0)] = -cap
    zeta[(rates == 0.0) & (wdot > 0.0)] = cap
    return TiltProtocol(path.times, zeta)


@dataclass
class ContractionResult:
    """Outcome of contracting the rate functional onto a concentration path."""

    value: float
    minimizer: GridPath | None
    infinity_reason: str | None = None
    cell_values: np.ndarray | None = None


def contraction_cell(
    net: ReactionNetwork,
    c: np.ndarray,
    cdot: np.ndarray,
    xi0: np.ndarray | None = None,
    grad_tol: float = 1e-10,
    max_iter: int = 100,
    xi_cap: float = 200.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Instantaneous contraction cost at one state.

    Maximizes the smooth concave dual ``xi -> xi . cdot - H(c, Gamma^T xi)``
    by damped Newton with Armijo backtracking, starting from ``xi0`` (zero
    by default).  The primal minimizer is recovered from the optimal tilt as
    ``j_r = kbar_r(c) exp((Gamma^T xi)_r)``.

    Returns:
        (value, j, xi); value is ``+inf`` when the cell is infeasible
        (``cdot`` outside the attainable flux cone), in which case the dual
        iterates run away and are cut off at ``xi_cap``.

    Raises:
        ConvergenceError: if Newton stalls without converging or diverging.
    """
    c = np.asarray(c, dtype=float)
    cdot = np.asarray(cdot, dtype=float)
    rates = net.macro_rates_grid(c[None, :])[0]
    gamma = net.Gamma

    def dual_parts(xi):
        theta = gamma.T @ xi
        with np.errstate(over="ignore"):
            j = rates * np.exp(np.minimum(theta, 700.0))
        value = float(xi @ cdot - np.sum(rates * np.expm1(np.minimum(theta, 700.0))))
        return value, j

    xi = np.zeros(net.n_species) if xi0 is None else np.asarray(xi0, dtype=float).copy()
    value, j = dual_parts(xi)
    for _ in range(max_iter):
        grad = cdot - gamma @ j
        if np.max(np.abs(grad)) < grad_tol:
            return value, j, xi
        hess = gamma @ (j[:, None] * gamma.T)
        step, *_ = np.linalg.lstsq(hess, grad, rcond=None)
        if not np.all(np.isfinite(step)) or step @ grad <= 0.0:
            step = grad
        slope = float(step @ grad)
        alpha = 1.0
        while alpha > 1e-14:
            candidate = xi + alpha * step
            cand_value, cand_j = dual_parts(candidate)
            if cand_value >= value + 1e-4 * alpha * slope:
                xi, value, j = candidate, cand_value, cand_j
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("contraction Newton stalled in line search")
        if np.max(np.abs(xi)) > xi_cap:
            # recession direction: the dual is unbounded, the cell infeasible
            return math.inf, j, xi
    grad = cdot - gamma @ j
    if np.max(np.abs(grad)) < 1e3 * grad_tol:
        return value, j, xi
    raise ConvergenceError(f"contraction Newton did not converge (|grad|={np.max(np.abs(grad)):.2e})")


def contraction_I(
    net: ReactionNetwork,
    cpath: GridPath,
    grad_tol: float = 1e-10,
    max_iter: int = 100,
) -> ContractionResult:
    """Contracted rate functional of a concentration path.

    Differentiates the concentrations by centered differences, solves the
    per-point convex program with warm-started duals, integrates by
    trapezoid and reconstructs the minimizing flux path cumulatively.
    """
    cdot = cpath.deriv_c()
    n_pts = len(cpath.times)
    cell_values = np.empty(n_pts)
    j_star = np.empty((n_pts, net.n_reactions))
    xi = None
    for k in range(n_pts):
        value, j, xi = contraction_cell(
            net, cpath.c[k], cdot[k], xi0=xi, grad_tol=grad_tol, max_iter=max_iter
        )
        if not math.isfinite(value):
            return ContractionResult(
                math.inf, None, f"infeasible cell at t={cpath.times[k]:.6g}", None
            )
        cell_values[k] = value
        j_star[k] = j
    total = float(_trapezoid_columns(cell_values[:, None], cpath.dt)[0])
    w = np.zeros_like(j_star)
    w[1:] = np.cumsum(0.5 * cpath.dt * (j_star[1:] + j_star[:-1]), axis=0)
    minimizer = GridPath(cpath.times, cpath.c, w)
    return ContractionResult(total, minimizer, None, cell_values)
