"""Regularization of finite-cost paths into the tilt-admissible class.

A path is admissible when its rates and flux rates are bounded away from
zero and the induced tilt ``zeta = log(wdot / kbar(c))`` is bounded with
compact support inside (0, T).  Four stages produce such paths from any
finite-cost grid path, each preserving nonnegativity, monotone flux and
the continuity equation:

1. lift: blend the concentration toward a point with all rates positive,
   ``c_d = d*chat + (1-d)*c`` with ``w_d = (1-d)*w``;
2. mollify: convolve the flux with a discrete Gaussian (constant extension
   outside the window) and rebuild c through the continuity equation;
3. floor: ``w_d = (1-d)*w + d*t`` with the matching concentration shift,
   so every flux rate is at least ``d``;
4. cutoff: multiply the induced tilt by a smooth ramp vanishing near the
   endpoints and re-solve the tilted fluid equation, giving an exact
   member of the admissible class up to grid error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .fluid import solve_perturbed
from .network import ReactionNetwork
from .paths import GridPath, TiltProtocol
from .rate import evaluate_J

__all__ = [
    "approx_lift",
    "approx_mollify",
    "approx_floor",
    "approx_cutoff",
    "assess_admissibility",
    "regularize_to_admissible",
    "AdmissibilityReport",
    "positive_rate_witness",
]


def positive_rate_witness(net: ReactionNetwork) -> np.ndarray:
    """A concentration with every macroscopic rate strictly positive.

    Scans axis-aligned candidates ``M * e_y`` for M in {1, 10, 100} per
    reaction and sums the per-reaction witnesses; monotone kinetics then
    keep all rates positive at the sum.
    """
    total = np.zeros(net.n_species)
    for r, rxn in enumerate(net.reactions):
        found = None
        for magnitude in (1.0, 10.0, 100.0):
            for y in range(net.n_species):
                candidate = np.zeros(net.n_species)
                candidate[y] = magnitude
                if rxn.kinetics.macro(rxn.alpha, candidate) > 0.0:
                    found = candidate
                    break
            if found is not None:
                break
        if found is None:
            raise ValidationError(f"no positive-rate witness found for reaction {r}")
        total += found
    if np.any(net.macro_rates(total) <= 0.0):
        raise ValidationError("summed witness fails to make all rates positive")
    return total


def approx_lift(
    net: ReactionNetwork, path: GridPath, delta: float, chat: np.ndarray | None = None
) -> GridPath:
    """Stage 1: blend toward a positive-rate point; rates >= psi(delta) * min rate."""
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1)")
    chat = positive_rate_witness(net) if chat is None else np.asarray(chat, dtype=float)
    floor = float(np.min(net.macro_rates(chat)))
    if floor <= 0.0:
        raise ValidationError("chat must have all rates strictly positive")
    c_new = delta * chat[None, :] + (1.0 - delta) * path.c
    w_new = (1.0 - delta) * path.w
    meta = dict(path.meta)
    meta["rate_floor"] = delta**net.max_total_order * floor
    return GridPath(path.times, c_new, w_new, meta)


def _gaussian_weights(variance: float, dt: float) -> np.ndarray:
    """Discrete Gaussian kernel, truncated at 8 standard deviations, mass one."""
    std = math.sqrt(variance)
    half = max(1, int(math.ceil(8.0 * std / dt)))
    offsets = np.arange(-half, half + 1) * dt
    weights = np.exp(-(offsets**2) / (2.0 * variance))
    return weights / weights.sum()


def approx_mollify(path: GridPath, delta: float) -> GridPath:
    """Stage 2: Gaussian smoothing of the flux (kernel variance ``delta``).

    The flux is extended constantly outside [0, T]; the smoothed path is
    re-anchored at w(0) = 0 and the concentration rebuilt from the smoothed
    flux, which equals the smoothed concentration by the continuity equation.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    weights = _gaussian_weights(delta, path.dt)
    half = (len(weights) - 1) // 2
    w_ext = np.vstack(
        [np.repeat(path.w[:1], half, axis=0), path.w, np.repeat(path.w[-1:], half, axis=0)]
    )
    smoothed = np.empty_like(path.w)
    for r in range(path.n_reactions):
        smoothed[:, r] = np.convolve(w_ext[:, r], weights, mode="valid")
    w_new = smoothed - smoothed[0]
    # smoothing c directly equals c(0) + Gamma (w * theta) by the continuity
    # equation, and keeps nonnegativity manifest (positive kernel)
    c_ext = np.vstack(
        [np.repeat(path.c[:1], half, axis=0), path.c, np.repeat(path.c[-1:], half, axis=0)]
    )
    c_new = np.empty_like(path.c)
    for y in range(path.n_species):
        c_new[:, y] = np.convolve(c_ext[:, y], weights, mode="valid")
    return GridPath(path.times, c_new, w_new, dict(path.meta))


def approx_floor(net: ReactionNetwork, path: GridPath, delta: float) -> GridPath:
    """Stage 3: mix in unit flux so every flux rate is at least ``delta``."""
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1)")
    t = path.times[:, None]
    horizon = path.horizon
    alpha_sum = net.alpha_matrix.sum(axis=0).astype(float)
    beta_sum = net.beta_matrix.sum(axis=0).astype(float)
    w_new = (1.0 - delta) * path.w + delta * t
    c_new = (1.0 - delta) * path.c + delta * (
        (horizon - t) * alpha_sum[None, :] + t * beta_sum[None, :]
    )
    meta = dict(path.meta)
    meta["flux_floor"] = delta
    return GridPath(path.times, c_new, w_new, meta)


def smooth_cutoff(times: np.ndarray, horizon: float, delta: float) -> np.ndarray:
    """C^1 ramp: 0 on the delta-margins, 1 on [2 delta, T - 2 delta], cubic between."""
    if not 0.0 < 2.0 * delta < horizon / 2.0:
        raise ValidationError("cutoff margin too large for the horizon")

    def ramp(x):
        x = np.clip(x, 0.0, 1.0)
        return x * x * (3.0 - 2.0 * x)

    up = ramp((times - delta) / delta)
    down = ramp((horizon - delta - times) / delta)
    return np.minimum(up, down)


def approx_cutoff(net: ReactionNetwork, path: GridPath, delta: float) -> GridPath:
    """Stage 4: cut the induced tilt off near the endpoints and re-solve.

    Requires strictly positive flux rates and macroscopic rates along the
    input.  The output solves the tilted fluid equation for the cut-off
    tilt from the same initial concentration, hence satisfies the
    continuity equation exactly and has w(0) = 0.
    """
    wdot = path.deriv_w()
    rates = net.macro_rates_grid(path.c)
    if np.min(wdot) <= 0.0 or np.min(rates) <= 0.0:
        raise ValidationError("cutoff stage needs strictly positive flux and rates")
    zeta = np.log(wdot / rates) * smooth_cutoff(path.times, path.horizon, delta)[:, None]
    tilt = TiltProtocol(path.times, zeta, compact_support=True, support_margin=delta)
    out = solve_perturbed(net, path.c[0], tilt, path.horizon, len(path.times) - 1)
    out.meta.update(path.meta)
    out.meta["cutoff_margin"] = delta
    out.meta["tilt"] = tilt.to_json()
    return out


@dataclass
class AdmissibilityReport:
    """Measured admissibility flags and the bounds they certify."""

    rates_bounded_below: bool
    flux_bounded_below: bool
    tilt_bounded: bool
    tilt_compact_support: bool
    achieved: dict

    @property
    def member(self) -> bool:
        return (
            self.rates_bounded_below
            and self.flux_bounded_below
            and self.tilt_bounded
            and self.tilt_compact_support
        )

    def to_json(self) -> dict:
        return {
            "flags": {
                "rates_bounded_below": self.rates_bounded_below,
                "flux_bounded_below": self.flux_bounded_below,
                "tilt_bounded": self.tilt_bounded,
                "tilt_compact_support": self.tilt_compact_support,
            },
            "achieved": self.achieved,
            "member": self.member,
        }


def assess_admissibility(
    net: ReactionNetwork,
    path: GridPath,
    margin: float,
    support_tol: float | None = None,
) -> AdmissibilityReport:
    """Measure the admissibility flags of a grid path.

    ``support_tol`` bounds how large the induced tilt may be on the
    ``margin``-wide edge regions while still counting as compactly
    supported; it defaults to ``10 * dt**2`` (the centered-difference noise
    scale).  The two outermost grid points are excluded from the margin
    measurement: their one-sided differences carry O(dt) error regardless
    of the underlying tilt.
    """
    if support_tol is None:
        support_tol = 10.0 * path.dt**2
    wdot = path.deriv_w()
    rates = net.macro_rates_grid(path.c)
    min_rate = float(rates.min())
    min_flux = float(wdot.min())
    both = (rates > 0.0) & (wdot > 0.0)
    mixed = (rates > 0.0) != (wdot > 0.0)
    zeta = np.zeros_like(wdot)
    zeta[both] = np.log(wdot[both] / rates[both])
    max_tilt = float(np.max(np.abs(zeta))) if zeta.size else 0.0
    tilt_bounded = not bool(np.any(mixed))
    # only stencils fully inside the margin can attest to the tilt there
    reach = margin - path.dt + 1e-12
    edge = (path.times <= reach) | (path.times >= path.horizon - reach)
    edge[0] = edge[-1] = False
    margin_sup = float(np.max(np.abs(zeta[edge]))) if np.any(edge) else 0.0
    margin_mixed = bool(np.any(mixed[edge]))
    return AdmissibilityReport(
        rates_bounded_below=min_rate > 0.0,
        flux_bounded_below=min_flux > 0.0,
        tilt_bounded=tilt_bounded,
        tilt_compact_support=tilt_bounded
        and not margin_mixed
        and margin_sup <= support_tol,
        achieved={
            "min_rate": min_rate,
            "min_flux": min_flux,
            "max_abs_tilt": max_tilt if tilt_bounded else math.inf,
            "margin_sup_tilt": margin_sup if not margin_mixed else math.inf,
            "margin": margin,
            "support_tol": support_tol,
        },
    )


def regularize_to_admissible(
    net: ReactionNetwork, path: GridPath, delta: float
) -> tuple[GridPath, AdmissibilityReport]:
    """Compose lift, mollify, floor and cutoff with one shared ``delta``.

    The mollification stage runs with kernel variance ``delta**2`` (standard
    deviation ``delta``) so the cutoff margins dominate its boundary layer.
    Requires the input cost to be finite.
    """
    report_in = evaluate_J(net, path)
    if not math.isfinite(report_in.value):
        raise ValidationError(
            f"input path has infinite cost ({report_in.infinity_reason}); cannot regularize"
        )
    lifted = approx_lift(net, path, delta)
    smoothed = approx_mollify(lifted, delta**2)
    floored = approx_floor(net, smoothed, delta)
    out = approx_cutoff(net, floored, delta)
    return out, assess_admissibility(net, out, margin=delta)
