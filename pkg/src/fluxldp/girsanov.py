"""Pathwise change of measure, importance sampling and an exact CTMC oracle.

For a tilt protocol ``zeta`` the log-likelihood ratio of the tilted law
against the original one along a jump path is

    log(dP_zeta / dP) = sum_i zeta_{r_i}(t_i)
                        - int_0^T sum_r k_r(n(t)) (exp(zeta_r(t)) - 1) dt,

with the integral summed exactly over inter-jump segments (the state is
piecewise constant and piecewise-linear zeta has a closed-form exponential
antiderivative).  Importance sampling simulates under the tilted dynamics
and reweights indicator events by ``exp(-LR)``.

``exact_transient`` computes the end-time distribution of a truncated copy
of the chain by uniformization, reporting the probability mass lost to
truncation; it serves as the desk-scale oracle for the sampling estimates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._parallel import replica_map
from .errors import OracleError, ValidationError
from .network import ReactionNetwork
from .paths import GridPath, JumpPath, TiltProtocol
from .simulate import segment_propensities, simulate

__all__ = [
    "log_likelihood_ratio",
    "path_tilt_functional",
    "EventPredicate",
    "AlwaysEvent",
    "EndpointFluxEvent",
    "EndpointCountEvent",
    "TubeEvent",
    "GBallEvent",
    "event_from_spec",
    "EstimateReport",
    "importance_estimate",
    "importance_estimate_multi",
    "TransientDistribution",
    "exact_transient",
]

logger = logging.getLogger(__name__)


def log_likelihood_ratio(
    net: ReactionNetwork,
    path: JumpPath,
    tilt: TiltProtocol,
    t0: float = 0.0,
    t1: float | None = None,
) -> float:
    """log(dP_tilt / dP) along ``path``, restricted to the window [t0, t1].

    Additive over adjoining windows by exact per-segment integration.
    """
    if t1 is None:
        t1 = path.horizon
    if not 0.0 <= t0 <= t1 <= path.horizon + 1e-12:
        raise ValidationError("window must satisfy 0 <= t0 <= t1 <= horizon")
    if tilt.n_reactions != path.n_reactions:
        raise ValidationError("tilt has the wrong number of reactions")
    bounds, _, props = segment_propensities(net, path)
    lo = np.maximum(bounds[:-1], t0)
    hi = np.minimum(bounds[1:], t1)
    lengths = np.maximum(hi - lo, 0.0)
    constant = tilt.constant_value()
    jump_term = 0.0
    if path.n_events:
        in_window = (path.times > t0) & (path.times <= t1)
        if np.any(in_window):
            if constant is not None:
                hits = np.bincount(path.reactions[in_window], minlength=path.n_reactions)
                jump_term = float(hits @ constant)
            else:
                zeta_at_events = tilt.eval(path.times[in_window])
                jump_term = float(
                    zeta_at_events[
                        np.arange(zeta_at_events.shape[0]), path.reactions[in_window]
                    ].sum()
                )
    if constant is not None:
        compensator = float((lengths @ props) @ np.expm1(constant))
        return jump_term - compensator
    keep = lengths > 0
    if not np.any(keep):
        return jump_term
    exp_int = tilt.integrate_exp(lo[keep], hi[keep])
    compensator = float(np.sum(props[keep] * (exp_int - lengths[keep][:, None])))
    return jump_term - compensator


def path_tilt_functional(
    net: ReactionNetwork, path: JumpPath, tilt: TiltProtocol, micro: bool = True
) -> float:
    """The tilt pairing functional of a jump path (likelihood exponent / V).

    With ``micro=True`` this is ``log_likelihood_ratio / V`` exactly; with
    ``micro=False`` the compensator uses the macroscopic rates instead of
    the rescaled propensities (the fluid-level functional used for G-ball
    event sets).
    """
    if micro:
        return log_likelihood_ratio(net, path, tilt) / path.volume
    bounds, counts, _ = segment_propensities(net, path)
    rates = net.macro_rates_grid(counts / path.volume)
    exp_int = tilt.integrate_exp(bounds[:-1], bounds[1:])
    lengths = np.diff(bounds)[:, None]
    compensator = float(np.sum(rates * (exp_int - lengths)))
    jump_term = 0.0
    if path.n_events:
        zeta_at_events = tilt.eval(path.times)
        jump_term = float(
            zeta_at_events[np.arange(path.n_events), path.reactions].sum() / path.volume
        )
    return jump_term - compensator


# --- event predicates --------------------------------------------------------


class EventPredicate:
    """A deterministic, side-effect-free test on jump paths."""

    def test(self, path: JumpPath) -> bool:
        raise NotImplementedError

    def count_predicate(self):
        """Predicate over end-time count vectors, if the event is an endpoint
        event expressible on the chain state; ``None`` otherwise."""
        return None


class AlwaysEvent(EventPredicate):
    def test(self, path):
        return True

    def count_predicate(self):
        return lambda n: True


@dataclass
class EndpointFluxEvent(EventPredicate):
    """w_r(T) in [lo, hi] (rescaled flux units)."""

    reaction: int
    lo: float = -math.inf
    hi: float = math.inf

    def test(self, path):
        w_r = np.count_nonzero(path.reactions == self.reaction) / path.volume
        return self.lo <= w_r <= self.hi


@dataclass
class EndpointCountEvent(EventPredicate):
    """Molecule count of one species at the horizon in [lo, hi]."""

    species: int
    lo: float = -math.inf
    hi: float = math.inf

    def test(self, path):
        counts = path.counts_after_events()[-1]
        return self.lo <= counts[self.species] <= self.hi

    def count_predicate(self):
        return lambda n: self.lo <= n[self.species] <= self.hi


@dataclass
class TubeEvent(EventPredicate):
    """Sup-norm tube of given radius around a grid path, checked on its grid."""

    center: GridPath
    radius: float

    def test(self, path):
        sampled = path.to_grid(len(self.center.times) - 1)
        return sampled.sup_distance(self.center) <= self.radius


@dataclass
class GBallEvent(EventPredicate):
    """|G(path, zeta) - G(center, zeta)| < epsilon for the fluid-level pairing."""

    net: ReactionNetwork
    tilt: TiltProtocol
    center_value: float
    epsilon: float

    def test(self, path):
        return abs(path_tilt_functional(self.net, path, self.tilt, micro=False) - self.center_value) < self.epsilon


def event_from_spec(spec: dict, net: ReactionNetwork | None = None) -> EventPredicate:
    """Build an event predicate from its JSON spec (see the CLI docs)."""
    kind = spec.get("kind")
    if kind == "always":
        return AlwaysEvent()
    if kind == "endpoint-flux":
        return EndpointFluxEvent(
            int(spec["reaction"]),
            float(spec.get("lo", -math.inf)),
            float(spec.get("hi", math.inf)),
        )
    if kind == "endpoint-count":
        return EndpointCountEvent(
            int(spec["species"]),
            float(spec.get("lo", -math.inf)),
            float(spec.get("hi", math.inf)),
        )
    raise ValidationError(f"unknown event kind {kind!r}")


# --- importance sampling ------------------------------------------------------


@dataclass
class EstimateReport:
    """Importance-sampling probability estimate with sampling diagnostics."""

    p_hat: float
    stderr: float
    ess: float
    replicas: int

    def to_json(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "stderr": self.stderr,
            "ess": self.ess,
            "replicas": self.replicas,
        }


def _is_worker(common, k):
    net, volume, c0, horizon, events, tilt, seed = common
    path = simulate(net, volume, c0, horizon, seed, tilt=tilt, stream=k)
    weight = math.exp(-log_likelihood_ratio(net, path, tilt))
    return weight, tuple(1.0 if event.test(path) else 0.0 for event in events)


def importance_estimate_multi(
    net: ReactionNetwork,
    volume: int,
    c0: np.ndarray,
    horizon: float,
    events: list[EventPredicate],
    tilt: TiltProtocol,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> list[EstimateReport]:
    """Estimate several event probabilities on one shared set of tilted paths.

    Simulates ``replicas`` tilted paths once and averages the reweighted
    indicators ``1_event * exp(-LR)`` per event.  The effective sample size
    is the usual squared-sum ratio of the weights; a negligible weight sum
    is logged as a warning (the estimates are then unreliable).
    """
    if replicas < 2:
        raise ValidationError("need at least 2 replicas")
    common = (net, volume, np.asarray(c0, dtype=np.int64), horizon, events, tilt, seed)
    pairs = replica_map(_is_worker, common, replicas, threads)
    weights = np.array([p[0] for p in pairs])
    hit_matrix = np.array([p[1] for p in pairs])
    total = float(weights.sum())
    ess = float(total * total / np.sum(weights * weights)) if total > 0 else 0.0
    if total <= 0.0:
        logger.warning("importance weights all negligible: zero effective sample size")
    reports = []
    for col in range(hit_matrix.shape[1]):
        values = weights * hit_matrix[:, col]
        p_hat = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(replicas))
        reports.append(EstimateReport(p_hat=p_hat, stderr=stderr, ess=ess, replicas=replicas))
    return reports


def importance_estimate(
    net: ReactionNetwork,
    volume: int,
    c0: np.ndarray,
    horizon: float,
    event: EventPredicate,
    tilt: TiltProtocol,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> EstimateReport:
    """Estimate P(event) under the original law by sampling the tilted one."""
    return importance_estimate_multi(
        net, volume, c0, horizon, [event], tilt, replicas, seed, threads=threads
    )[0]


# --- exact transient distribution --------------------------------------------


@dataclass
class TransientDistribution:
    """End-time distribution of the truncated chain (counts, probabilities)."""

    volume: int
    horizon: float
    states: np.ndarray
    probabilities: np.ndarray
    truncated_mass: float

    def prob(self, predicate) -> float:
        """Total probability of states satisfying ``predicate(count_vector)``."""
        mask = np.fromiter(
            (bool(predicate(s)) for s in self.states), count=len(self.states), dtype=bool
        )
        return float(self.probabilities[mask].sum())

    def to_csv(self) -> str:
        lines = ["state,probability"]
        for s, p in zip(self.states, self.probabilities):
            lines.append(f"{' '.join(str(int(v)) for v in s)},{float(p)!r}")
        return "\n".join(lines) + "\n"


def exact_transient(
    net: ReactionNetwork,
    volume: int,
    c0: np.ndarray,
    horizon: float,
    state_cap: int = 200_000,
    species_caps: np.ndarray | None = None,
    series_tol: float = 1e-13,
) -> TransientDistribution:
    """Transient distribution at the horizon by uniformization.

    The reachable count vectors are enumerated breadth-first; transitions
    that exceed a per-species cap flow into an absorbing overflow state
    whose terminal mass is reported as ``truncated_mass``.  Without caps
    the enumeration itself must stay below ``state_cap`` or the call fails.

    Raises:
        OracleError: if the state space exceeds ``state_cap``.
    """
    c0 = np.asarray(c0, dtype=np.int64)
    if np.any(c0 < 0):
        raise ValidationError("initial counts must be nonnegative")
    caps = None if species_caps is None else np.asarray(species_caps, dtype=np.int64)
    if caps is not None and np.any(c0 > caps):
        raise ValidationError("initial counts exceed the species caps")

    index: dict[tuple, int] = {tuple(c0.tolist()): 0}
    order: list[tuple] = [tuple(c0.tolist())]
    rows: list[int] = []
    cols: list[int] = []
    rates: list[float] = []
    overflow_rate: dict[int, float] = {}
    frontier = [tuple(c0.tolist())]
    while frontier:
        nxt = []
        for state in frontier:
            i = index[state]
            n = np.asarray(state, dtype=np.int64)
            props = net.micro_propensities(volume, n)
            for r, rate in enumerate(props):
                if rate <= 0.0:
                    continue
                target = n + net.gamma_matrix[r]
                if caps is not None and np.any(target > caps):
                    overflow_rate[i] = overflow_rate.get(i, 0.0) + float(rate)
                    continue
                key = tuple(target.tolist())
                j = index.get(key)
                if j is None:
                    if len(index) >= state_cap:
                        raise OracleError(
                            f"reachable state space exceeds cap {state_cap}; "
                            "tighten species_caps"
                        )
                    j = len(index)
                    index[key] = j
                    order.append(key)
                    nxt.append(key)
                rows.append(i)
                cols.append(j)
                rates.append(float(rate))
        frontier = nxt

    n_states = len(order) + 1  # one absorbing overflow state at the end
    sink = n_states - 1
    for i, rate in overflow_rate.items():
        rows.append(i)
        cols.append(sink)
        rates.append(rate)
    q = sparse.coo_matrix((rates, (rows, cols)), shape=(n_states, n_states)).tocsr()
    exit_rates = np.asarray(q.sum(axis=1)).ravel()
    lam = float(exit_rates.max()) * 1.02 + 1e-12
    transition = q / lam
    keep = 1.0 - exit_rates / lam

    mean_jumps = lam * horizon
    spread = 10.0 * math.sqrt(mean_jumps + 10.0) + 10.0
    m_hi = int(mean_jumps + spread) + 5

    phi = np.zeros(n_states)
    phi[0] = 1.0
    acc = np.zeros(n_states)
    log_lam_t = math.log(mean_jumps) if mean_jumps > 0 else -math.inf
    tail = 1.0
    for m in range(m_hi + 1):
        log_weight = -mean_jumps + m * log_lam_t - math.lgamma(m + 1) if mean_jumps > 0 else (
            0.0 if m == 0 else -math.inf
        )
        weight = math.exp(log_weight)
        acc += weight * phi
        tail -= weight
        if tail < series_tol and m > mean_jumps:
            break
        phi = keep * phi + transition.T @ phi
    truncated = float(acc[sink] + max(tail, 0.0))
    states = np.array(order, dtype=np.int64)
    return TransientDistribution(
        volume=volume,
        horizon=horizon,
        states=states,
        probabilities=acc[:-1],
        truncated_mass=truncated,
    )
