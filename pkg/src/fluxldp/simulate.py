"""Exact stochastic simulation of the reaction jump process.

The sampler is the classic direct method driven by counter-based Philox
streams, so replica ``k`` of master seed ``s`` is reproducible regardless
of scheduling.  Time-dependent tilts multiply the jump rates by
``exp(zeta_r(t))`` and are simulated exactly by Ogata thinning against the
state-wise majorant ``sum_r k_r(n) * exp(max_t zeta_r)``, recomputed after
every accepted jump.  With ``zeta == 0`` the thinned sampler consumes the
same uniform sequence as the plain one, so the two are pathwise identical
for equal seeds.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SimulationError, ValidationError
from .network import Constant, MassAction, ReactionNetwork
from .paths import JumpPath, TiltProtocol

__all__ = ["philox_stream", "simulate", "martingale_residual"]

_BLOCK = 1 << 14


def philox_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based RNG stream keyed by (master seed, stream index)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _Uniforms:
    """Buffered uniform draws from a Generator (cheap scalar access).

    Blocks grow geometrically so short paths do not pay for a large buffer.
    """

    __slots__ = ("_rng", "_buf", "_i", "_n", "_block")

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._block = 256
        self._buf = rng.random(self._block).tolist()
        self._n = self._block
        self._i = 0

    def __call__(self) -> float:
        i = self._i
        if i == self._n:
            if self._block < _BLOCK:
                self._block *= 4
            self._buf = self._rng.random(self._block).tolist()
            self._n = self._block
            i = 0
        self._i = i + 1
        return self._buf[i]


def _propensity_tables(net: ReactionNetwork, volume: int):
    """Flatten per-reaction propensity evaluation into loop-friendly tables.

    mass action -> (0, scale, terms) with scale = kappa * V**(1 - total order)
    and terms = ((species, order), ...); constant -> (1, kappa * V, ());
    anything else -> (2, micro callable, alpha).
    """
    tables = []
    for rxn in net.reactions:
        kin = rxn.kinetics
        if isinstance(kin, MassAction):
            scale = kin.kappa * float(volume) ** (1 - rxn.total_order)
            terms = tuple(
                (int(y), int(rxn.alpha[y])) for y in np.nonzero(rxn.alpha)[0]
            )
            tables.append((0, scale, terms))
        elif isinstance(kin, Constant):
            tables.append((1, kin.kappa * volume, ()))
        else:
            tables.append((2, kin.micro, rxn.alpha))
    return tables


def _eval_propensities(tables, volume, n, out):
    for j, (kind, a, b) in enumerate(tables):
        if kind == 0:
            acc = a
            for y, order in b:
                ny = n[y]
                if ny < order:
                    acc = 0.0
                    break
                for q in range(order):
                    acc *= ny - q
            out[j] = acc
        elif kind == 1:
            out[j] = a
        else:
            out[j] = a(b, volume, np.asarray(n))
    return out


def simulate(
    net: ReactionNetwork,
    volume: int,
    c0: np.ndarray,
    horizon: float,
    seed: int,
    tilt: TiltProtocol | None = None,
    max_events: int = 100_000_000,
    stream: int = 0,
) -> JumpPath:
    """Draw one exact trajectory of the jump process on [0, horizon].

    Args:
        net: reaction network (immutable, shared freely).
        volume: system volume V; propensities use the microscopic law at V.
        c0: initial molecule counts (length n_species).
        horizon: end time T > 0.
        seed: master RNG seed; with ``stream`` it keys an independent
            Philox stream, so (seed, stream) fully determines the path.
        tilt: optional tilt protocol; jump rates are multiplied by
            ``exp(zeta_r(t))``.
        max_events: hard safety cap signalling near-explosion when hit.

    Returns:
        The simulated :class:`~fluxldp.paths.JumpPath` (bit-reproducible).
    """
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    c0 = np.asarray(c0, dtype=np.int64)
    if c0.shape != (net.n_species,):
        raise ValidationError(f"expected {net.n_species} initial counts")
    if np.any(c0 < 0):
        raise ValidationError("initial counts must be nonnegative")
    if tilt is not None:
        if tilt.n_reactions != net.n_reactions:
            raise ValidationError("tilt has the wrong number of reactions")
        if tilt.horizon < horizon * (1 - 1e-12):
            raise ValidationError("tilt protocol does not cover the horizon")

    tables = _propensity_tables(net, volume)
    n_reactions = net.n_reactions
    deltas = [
        tuple((int(y), int(g)) for y, g in enumerate(net.gamma_matrix[r]) if g != 0)
        for r in range(n_reactions)
    ]
    uni = _Uniforms(philox_stream(seed, stream))
    n = c0.tolist()
    props = [0.0] * n_reactions
    lam = [0.0] * n_reactions
    times: list[float] = []
    rids: list[int] = []
    log = math.log
    exp = math.exp

    if tilt is None:
        majorant_factor = [1.0] * n_reactions
        zeta_rows = None
    else:
        majorant_factor = [float(exp(m)) for m in tilt.max_per_reaction()]
        zeta_rows = tilt.zeta.tolist()
        zeta_dt = float(tilt.times[1] - tilt.times[0])
        zeta_top = len(zeta_rows) - 2

    t = 0.0
    _eval_propensities(tables, volume, n, props)
    while True:
        bound = 0.0
        for j in range(n_reactions):
            bound += props[j] * majorant_factor[j]
        if not math.isfinite(bound):
            raise SimulationError(f"non-finite total propensity at t={t}")
        if bound <= 0.0:
            break
        # strictly positive waiting time; resample on floating-point ties
        t_cand = t
        while t_cand <= t:
            u = uni()
            if u == 0.0:
                t_cand = math.inf
                break
            t_cand = t - log(u) / bound
        if t_cand >= horizon:
            break
        if zeta_rows is None:
            total = bound
            for j in range(n_reactions):
                lam[j] = props[j]
        else:
            k = int(t_cand / zeta_dt)
            if k > zeta_top:
                k = zeta_top
            frac = t_cand / zeta_dt - k
            row0 = zeta_rows[k]
            row1 = zeta_rows[k + 1]
            total = 0.0
            for j in range(n_reactions):
                z = row0[j] + frac * (row1[j] - row0[j])
                lam[j] = props[j] * exp(z)
                total += lam[j]
            ratio = total / bound
            if ratio < 1.0 and uni() >= ratio:
                t = t_cand  # thinned proposal: time advances, state unchanged
                continue
        v = uni() * total
        acc = 0.0
        rid = n_reactions - 1
        for j in range(n_reactions):
            acc += lam[j]
            if v < acc:
                rid = j
                break
        for y, g in deltas[rid]:
            n[y] += g
        times.append(t_cand)
        rids.append(rid)
        t = t_cand
        if len(times) >= max_events:
            raise SimulationError(
                f"event cap {max_events} exceeded at t={t} (near-explosion guard)"
            )
        _eval_propensities(tables, volume, n, props)

    return JumpPath(
        volume=volume,
        c0=c0,
        times=np.array(times, dtype=float),
        reactions=np.array(rids, dtype=np.int32),
        horizon=horizon,
        gamma_matrix=net.gamma_matrix,
        validate=False,
    )


def segment_propensities(net: ReactionNetwork, path: JumpPath):
    """Per-segment data for pathwise integrals against piecewise-constant state.

    Returns ``(bounds, counts, props)`` where ``bounds`` has length
    ``n_events + 2`` (0, event times..., horizon), ``counts[i]`` is the count
    vector on segment ``[bounds[i], bounds[i+1])`` and ``props[i]`` the
    microscopic propensity vector there.
    """
    bounds = np.concatenate([[0.0], path.times, [path.horizon]])
    counts = path.counts_after_events()
    props = net.micro_propensities_grid(path.volume, counts)
    return bounds, counts, props


def _martingale_terminal(net, path, zeta, exponential):
    """M^f(T) for f(w) = zeta . w (linear) or exp(zeta . w) along one path."""
    volume = path.volume
    bounds, _, props = segment_propensities(net, path)
    seg_dt = np.diff(bounds)
    # flux vector on each segment
    w = np.zeros((len(seg_dt), net.n_reactions))
    if path.n_events:
        one_hot = np.zeros((path.n_events, net.n_reactions))
        one_hot[np.arange(path.n_events), path.reactions] = 1.0
        w[1:] = np.cumsum(one_hot, axis=0) / volume
    w_final = w[-1]
    if not exponential:
        generator_term = props @ (zeta / volume)
        return float(zeta @ w_final - np.sum(generator_term * seg_dt))
    jump_factor = np.expm1(zeta / volume)
    generator_term = np.exp(w @ zeta) * (props @ jump_factor)
    return float(math.exp(zeta @ w_final) - 1.0 - np.sum(generator_term * seg_dt))


def martingale_residual(
    net: ReactionNetwork,
    volume: int,
    c0: np.ndarray,
    horizon: float,
    f_kind: str,
    zeta: np.ndarray,
    replicas: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of the Dynkin martingale at T.

    ``f_kind`` selects the test function applied to the rescaled flux vector
    W: ``"linear"`` uses f(w) = zeta . w and ``"exponential"`` uses
    f(w) = exp(zeta . w), both with constant ``zeta``.  The compensator
    integral is summed exactly over inter-jump segments (the integrand is
    piecewise constant for constant zeta).
    """
    if replicas < 2:
        raise ValidationError("need at least 2 replicas")
    if f_kind not in ("linear", "exponential"):
        raise ValidationError(f"unknown f_kind {f_kind!r}")
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (net.n_reactions,):
        raise ValidationError(f"expected zeta of length {net.n_reactions}")
    values = np.empty(replicas)
    exponential = f_kind == "exponential"
    for k in range(replicas):
        path = simulate(net, volume, c0, horizon, seed, stream=k)
        values[k] = _martingale_terminal(net, path, zeta, exponential)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(replicas))
    return mean, stderr
