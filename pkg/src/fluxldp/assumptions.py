"""Numerical validation of the structural conditions on reaction rates.

The conditions quantify over continua, so every check here samples a
bounded window of the reachable set and reports evidence, not proof:
points ``c = clip(c0 + U(-eps, eps), 0) + Gamma w`` with ``w`` drawn from
``[0, w_max]`` per reaction.  Failures carry a concrete witness (the state,
reaction and perturbation where the inequality broke).

Checked items:

* (i)   propensities vanish whenever a count is too small for the jump,
* (ii)  rescaled propensities converge to the macroscopic rates on the
        sampled window as the volume grows,
* (iii/iv) rates and their gradients are finite (sampled boundedness),
* (v)   componentwise monotonicity of the rates,
* (vi)  superhomogeneity ``kbar(d*c) >= psi(d) * kbar(c)`` with
        ``psi(d) = d**p`` for p the maximum total reaction order
        (exact for mass action, numerical evidence otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .network import ReactionNetwork
from .simulate import philox_stream

__all__ = ["AssumptionItem", "AssumptionReport", "validate_assumptions"]


@dataclass
class AssumptionItem:
    """Outcome of one sampled check; failures always carry a witness."""

    passed: bool
    detail: str
    witness: dict | None = None


@dataclass
class AssumptionReport:
    """Per-item outcomes plus the certified superhomogeneity exponent."""

    items: dict[str, AssumptionItem]
    psi_exponent: int
    window: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(item.passed for item in self.items.values())

    def to_json(self) -> dict:
        return {
            "items": {
                name: {"passed": it.passed, "detail": it.detail, "witness": it.witness}
                for name, it in self.items.items()
            },
            "psi_exponent": self.psi_exponent,
            "window": self.window,
            "all_passed": self.all_passed,
        }


def _sample_window(net, c0, eps, n_samples, w_max, rng):
    points = [np.asarray(c0, dtype=float)]
    while len(points) < n_samples:
        base = np.clip(c0 + rng.uniform(-eps, eps, size=net.n_species), 0.0, None)
        w = rng.uniform(0.0, w_max, size=net.n_reactions)
        candidate = base + net.Gamma @ w
        if np.all(candidate >= 0.0):
            points.append(candidate)
    return np.array(points)


def validate_assumptions(
    net: ReactionNetwork,
    c0: np.ndarray,
    eps: float = 0.25,
    grid: int = 64,
    volumes: tuple[int, ...] = (10, 100, 1000, 10000),
    w_max: float = 1.0,
    seed: int = 2024,
) -> AssumptionReport:
    """Sampled validation of the rate conditions around ``c0``.

    Args:
        net: network under test.
        c0: window center (nonnegative concentration vector).
        eps: radius of the initial-condition ball in the window.
        grid: number of sampled window points per check.
        volumes: increasing volumes for the convergence check (ii).
        w_max: extent of the sampled flux box (the window is bounded even
            when the reachable set is not; the extent is recorded).
        seed: RNG seed for the deterministic sample.

    Returns:
        AssumptionReport with pass/fail per item and failure witnesses.
    """
    c0 = np.asarray(c0, dtype=float)
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if np.any(c0 < 0):
        raise ValidationError("window center must be nonnegative")
    rng = philox_stream(seed, 0)
    sample = _sample_window(net, c0, eps, grid, w_max, rng)
    p = net.max_total_order
    items: dict[str, AssumptionItem] = {}

    # (i) propensity zeros below the jump requirement
    witness = None
    scale = max(4, int(np.max(net.alpha_matrix)) + 2)
    for _ in range(grid):
        n = rng.integers(0, scale, size=net.n_species)
        props = net.micro_propensities(7, n)
        for r in range(net.n_reactions):
            required = np.maximum(-net.gamma_matrix[r], 0)
            if np.any(n < required) and props[r] != 0.0:
                witness = {"n": n.tolist(), "r": r}
                break
        if witness:
            break
    items["i"] = AssumptionItem(
        witness is None,
        "propensity vanishes whenever a count is below the jump requirement",
        witness,
    )

    # (ii) volume convergence of rescaled propensities on the window
    gaps = []
    argmax_point = None
    for volume in volumes:
        worst = 0.0
        for c in sample:
            n = np.floor(volume * c).astype(np.int64)
            c_exact = n / volume
            gap = float(
                np.sum(np.abs(net.micro_propensities(volume, n) / volume - net.macro_rates(c_exact)))
            )
            if gap > worst:
                worst = gap
                if volume == volumes[-1]:
                    argmax_point = c_exact
        gaps.append(worst)
    converged = gaps[-1] <= max(1e-9, 0.1 * gaps[0])
    witness = None
    if not converged:
        witness = {"c": argmax_point.tolist() if argmax_point is not None else None, "gaps": gaps}
    items["ii"] = AssumptionItem(
        converged,
        f"sup gap over window per volume: {[f'{g:.3e}' for g in gaps]}",
        witness,
    )

    # (iii)/(iv) sampled boundedness of rates and gradients
    rates = np.array([net.macro_rates(c) for c in sample])
    grads = np.array([net.macro_jacobian(c) for c in sample])
    finite = bool(np.all(np.isfinite(rates)) and np.all(np.isfinite(grads)))
    items["iii_iv"] = AssumptionItem(
        finite,
        f"max |kbar| = {np.max(np.abs(rates)):.4g}, max |grad kbar| = {np.max(np.abs(grads)):.4g}",
        None if finite else {"c": sample[int(np.argmax(~np.isfinite(rates).all(axis=1)))].tolist()},
    )

    # (v) componentwise monotonicity on ordered pairs
    witness = None
    for c in sample:
        bump = rng.uniform(0.0, eps, size=net.n_species)
        low = net.macro_rates(c)
        high = net.macro_rates(c + bump)
        bad = np.nonzero(high < low - 1e-12)[0]
        if bad.size:
            witness = {"c": c.tolist(), "r": int(bad[0]), "delta": bump.tolist()}
            break
    items["v"] = AssumptionItem(
        witness is None, "kbar nondecreasing under componentwise increases", witness
    )

    # (vi) superhomogeneity with psi(d) = d**p
    witness = None
    deltas = np.linspace(0.05, 1.0, 20)
    for c in sample:
        base = net.macro_rates(c)
        for d in deltas:
            scaled = net.macro_rates(d * c)
            bad = np.nonzero(scaled < d**p * base - 1e-12)[0]
            if bad.size:
                witness = {"c": c.tolist(), "r": int(bad[0]), "delta": float(d)}
                break
        if witness:
            break
    items["vi"] = AssumptionItem(
        witness is None, f"kbar(d c) >= d**{p} kbar(c) on sampled window", witness
    )

    return AssumptionReport(
        items=items,
        psi_exponent=p,
        window={"eps": eps, "w_max": w_max, "samples": int(grid), "volumes": list(volumes)},
    )
