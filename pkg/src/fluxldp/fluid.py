"""Macroscopic fluid limits: the reaction rate equation and its tilted form.

The solver integrates the flux coordinate with fixed-step classical RK4,

    dw_r/dt = kbar_r(c) * exp(zeta_r(t)),      c = c(0) + Gamma w,

reconstructing concentrations through the continuity equation, which
therefore holds on the output grid up to floating-point roundoff by
construction.  Rates are evaluated with negative concentration components
clamped to zero; overshoot beyond an O(h^2) tolerance aborts the solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._parallel import replica_map
from .errors import IntegrationError, ValidationError
from .network import ReactionNetwork
from .paths import GridPath, TiltProtocol
from .simulate import simulate

__all__ = ["solve_rre", "solve_perturbed", "lln_gap", "LlnGapReport"]


def _tilt_factors(tilt: TiltProtocol | None, t: float, n_reactions: int) -> np.ndarray:
    if tilt is None:
        return np.ones(n_reactions)
    return np.exp(tilt.eval(t))


def solve_perturbed(
    net: ReactionNetwork,
    c0: np.ndarray,
    tilt: TiltProtocol | None,
    horizon: float,
    steps: int,
) -> GridPath:
    """Integrate the tilted reaction rate equation on a uniform grid.

    Args:
        net: reaction network.
        c0: nonnegative initial concentration vector.
        tilt: tilt protocol multiplying rates by ``exp(zeta_r(t))``;
            ``None`` gives the plain reaction rate equation bit-for-bit.
        horizon: end time T > 0.
        steps: number of RK4 steps (grid has ``steps + 1`` points).

    Returns:
        GridPath with exact continuity residual (c is reconstructed from w).

    Raises:
        IntegrationError: on blow-up (with the time estimate) or when a
            concentration overshoots below zero by more than O(h^2).
    """
    c0 = np.asarray(c0, dtype=float)
    if c0.shape != (net.n_species,):
        raise ValidationError(f"expected {net.n_species} concentrations")
    if np.any(c0 < 0):
        raise ValidationError("initial concentrations must be nonnegative")
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    if steps < 2:
        raise ValidationError("need at least 2 steps")
    if tilt is not None and tilt.horizon < horizon * (1 - 1e-12):
        raise ValidationError("tilt protocol does not cover the horizon")

    h = horizon / steps
    times = np.linspace(0.0, horizon, steps + 1)
    gamma = net.Gamma
    n_r = net.n_reactions

    def rhs(t: float, w: np.ndarray) -> np.ndarray:
        # overflow/NaN near blow-up is fine: the step loop aborts on
        # non-finite states with a time estimate
        with np.errstate(over="ignore", invalid="ignore"):
            c = c0 + gamma @ w
            rates = net.macro_rates_grid(c[None, :])[0]
        return rates * _tilt_factors(tilt, t, n_r)

    w = np.zeros((steps + 1, n_r))
    clamp_tol = h * h * (1.0 + float(np.max(np.abs(c0))))
    worst_overshoot = 0.0
    for k in range(steps):
        t = times[k]
        wk = w[k]
        k1 = rhs(t, wk)
        k2 = rhs(t + 0.5 * h, wk + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, wk + 0.5 * h * k2)
        k4 = rhs(t + h, wk + h * k3)
        w[k + 1] = wk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(w[k + 1])):
            raise IntegrationError(f"fluid state non-finite near t={times[k + 1]:.6g} (blow-up)")
        with np.errstate(invalid="ignore"):
            overshoot = -float(np.min(c0 + gamma @ w[k + 1]))
        if overshoot > clamp_tol:
            raise IntegrationError(
                f"concentration undershoot {overshoot:.3e} exceeds clamp tolerance "
                f"{clamp_tol:.3e} at t={times[k + 1]:.6g}; refine the grid"
            )
        worst_overshoot = max(worst_overshoot, overshoot)
    if worst_overshoot > 0.0:
        warnings.warn(
            f"concentrations clamped at zero (worst overshoot {worst_overshoot:.3e})",
            RuntimeWarning,
            stacklevel=2,
        )
    c = c0[None, :] + w @ gamma.T
    return GridPath(times, c, w)


def solve_rre(net: ReactionNetwork, c0: np.ndarray, horizon: float, steps: int) -> GridPath:
    """Integrate the reaction rate equation (the untilted fluid limit)."""
    return solve_perturbed(net, c0, None, horizon, steps)


@dataclass
class LlnGapReport:
    """Sup-norm gaps between simulated paths and the fluid path, one per replica."""

    volume: int
    gaps: np.ndarray

    @property
    def replicas(self) -> int:
        return len(self.gaps)

    @property
    def mean(self) -> float:
        return float(self.gaps.mean())

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.gaps, q))

    def to_json(self) -> dict:
        return {
            "V": self.volume,
            "replicas": self.replicas,
            "mean": self.mean,
            "quantiles": {str(q): self.quantile(q) for q in (0.5, 0.9, 0.99)},
        }


def _lln_worker(common, k):
    net, volume, counts0, horizon, steps, seed, tilt, fluid = common
    path = simulate(net, volume, counts0, horizon, seed, tilt=tilt, stream=k)
    return fluid.sup_distance(path.to_grid(steps))


def lln_gap(
    net: ReactionNetwork,
    volume: int,
    c0: np.ndarray,
    horizon: float,
    replicas: int,
    seed: int,
    tilt: TiltProtocol | None = None,
    steps: int = 200,
    threads: int = 1,
) -> LlnGapReport:
    """Sample sup-norm gaps between the jump process and its fluid limit.

    ``c0`` is a concentration vector with ``volume * c0`` integral (the
    deterministic initial counts).  Gaps are evaluated at the fluid grid
    points, a grid-based proxy for path-space convergence.
    """
    c0 = np.asarray(c0, dtype=float)
    counts0 = np.rint(volume * c0)
    if not np.allclose(counts0, volume * c0, atol=1e-9):
        raise ValidationError("volume * c0 must be an integer count vector")
    fluid = solve_perturbed(net, c0, tilt, horizon, steps)
    common = (net, volume, counts0.astype(np.int64), horizon, steps, seed, tilt, fluid)
    gaps = replica_map(_lln_worker, common, replicas, threads)
    return LlnGapReport(volume=volume, gaps=np.asarray(gaps))
