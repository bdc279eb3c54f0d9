"""Reaction networks: stoichiometry, kinetics, parsing and rate evaluation.

A network is a finite list of species together with reactions
``alpha -> beta @ kinetics``.  Each reaction carries its reactant complex
``alpha``, product complex ``beta`` (nonnegative integer vectors over the
species) and a kinetics law.  The net state change of one firing is
``gamma = beta - alpha``; the matrix ``Gamma`` with columns ``gamma`` maps
cumulative reaction fluxes to concentration changes.

Two kinetics families are built in:

* mass action: macroscopic rate ``kappa * prod_y c_y**alpha_y``, with the
  combinatorial (falling-factorial) counting law at finite volume,
* constant: rate ``kappa`` regardless of the state.

Other monotone laws can be plugged in by subclassing :class:`Kinetics`;
they participate in simulation and assumption validation but are not
representable in the text DSL or the JSON schema.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import NetworkSyntaxError, ValidationError

__all__ = [
    "Kinetics",
    "MassAction",
    "Constant",
    "Reaction",
    "ReactionNetwork",
    "parse_network",
    "render_network",
    "simplex_contains",
]


class Kinetics:
    """Base class for kinetics laws.

    Subclasses must provide :meth:`macro`.  The default microscopic
    propensity is ``V * macro(n / V)`` gated to zero whenever any species
    count is below its reactant requirement, which keeps counts nonnegative
    for any law (``alpha >= max(0, -gamma)`` componentwise since ``beta >= 0``).
    """

    kind: str = "custom"

    def macro(self, alpha: np.ndarray, c: np.ndarray) -> float:
        """Macroscopic rate at concentration vector ``c``."""
        raise NotImplementedError

    def micro(self, alpha: np.ndarray, volume: int, n: np.ndarray) -> float:
        """Microscopic propensity at count vector ``n`` and volume ``volume``."""
        if np.any(n < alpha):
            return 0.0
        return volume * self.macro(alpha, n / volume)

    def macro_gradient(self, alpha: np.ndarray, c: np.ndarray, h: float = 1e-6) -> np.ndarray:
        """Gradient of the macroscopic rate; central differences by default."""
        grad = np.zeros(len(c))
        for y in range(len(c)):
            cp = c.astype(float).copy()
            cm = cp.copy()
            cp[y] += h
            cm[y] = max(cm[y] - h, 0.0)
            grad[y] = (self.macro(alpha, cp) - self.macro(alpha, cm)) / (cp[y] - cm[y])
        return grad

    def scaled(self, factor: float) -> "Kinetics":
        """Same law with the rate constant multiplied by ``factor``."""
        raise NotImplementedError(f"{type(self).__name__} does not support rate scaling")


@dataclass(frozen=True)
class MassAction(Kinetics):
    """Mass-action kinetics with rate constant ``kappa``."""

    kappa: float
    kind: str = field(default="mass-action", init=False, repr=False)

    def __post_init__(self):
        if self.kappa < 0:
            raise ValidationError(f"mass-action rate constant must be >= 0, got {self.kappa}")

    def macro(self, alpha, c):
        rate = self.kappa
        for y in np.nonzero(alpha)[0]:
            rate *= c[y] ** alpha[y]
        return rate

    def micro(self, alpha, volume, n):
        # kappa * V * prod_y n_y (n_y - 1) ... (n_y - alpha_y + 1) / V**alpha_y
        rate = self.kappa * float(volume) ** (1 - int(alpha.sum()))
        for y in np.nonzero(alpha)[0]:
            ny = int(n[y])
            if ny < alpha[y]:
                return 0.0
            for q in range(int(alpha[y])):
                rate *= ny - q
        return rate

    def macro_gradient(self, alpha, c, h=None):
        grad = np.zeros(len(c))
        for y in np.nonzero(alpha)[0]:
            others = self.kappa
            for z in np.nonzero(alpha)[0]:
                if z != y:
                    others *= c[z] ** alpha[z]
            grad[y] = others * alpha[y] * c[y] ** (alpha[y] - 1)
        return grad

    def scaled(self, factor):
        return MassAction(self.kappa * factor)


@dataclass(frozen=True)
class Constant(Kinetics):
    """State-independent kinetics with rate ``kappa`` (propensity ``kappa * V``)."""

    kappa: float
    kind: str = field(default="constant", init=False, repr=False)

    def __post_init__(self):
        if self.kappa < 0:
            raise ValidationError(f"constant rate must be >= 0, got {self.kappa}")

    def macro(self, alpha, c):
        return self.kappa

    def micro(self, alpha, volume, n):
        if np.any(n < alpha):
            return 0.0
        return self.kappa * volume

    def macro_gradient(self, alpha, c, h=None):
        return np.zeros(len(c))

    def scaled(self, factor):
        return Constant(self.kappa * factor)


@dataclass(frozen=True)
class Reaction:
    """One reaction: reactant complex, product complex and a kinetics law."""

    alpha: np.ndarray
    beta: np.ndarray
    kinetics: Kinetics

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.int64)
        beta = np.asarray(self.beta, dtype=np.int64)
        if alpha.ndim != 1 or beta.shape != alpha.shape:
            raise ValidationError("alpha and beta must be integer vectors of equal length")
        if np.any(alpha < 0) or np.any(beta < 0):
            raise ValidationError("complexes must be nonnegative integer vectors")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def gamma(self) -> np.ndarray:
        """Effective stoichiometric vector beta - alpha."""
        return self.beta - self.alpha

    @property
    def total_order(self) -> int:
        return int(self.alpha.sum())


class ReactionNetwork:
    """Immutable reaction network over an ordered species list.

    Exposes the stoichiometric data (``alpha_matrix``, ``beta_matrix``,
    ``gamma_matrix`` with one row per reaction, and ``Gamma`` with one
    column per reaction) plus macroscopic/microscopic rate evaluation.
    All methods are pure; instances are safe to share across workers.
    """

    def __init__(self, species: list[str], reactions: list[Reaction]):
        if len(species) < 1:
            raise ValidationError("a network needs at least one species")
        if len(set(species)) != len(species):
            raise ValidationError("species names must be unique")
        if len(reactions) < 1:
            raise ValidationError("a network needs at least one reaction")
        for i, rxn in enumerate(reactions):
            if len(rxn.alpha) != len(species):
                raise ValidationError(
                    f"reaction {i}: complex length {len(rxn.alpha)} != {len(species)} species"
                )
        self.species = tuple(species)
        self.reactions = tuple(reactions)
        self.alpha_matrix = np.array([r.alpha for r in reactions], dtype=np.int64)
        self.beta_matrix = np.array([r.beta for r in reactions], dtype=np.int64)
        self.gamma_matrix = self.beta_matrix - self.alpha_matrix
        # Gamma maps flux increments to concentration increments (species x reactions).
        self.Gamma = self.gamma_matrix.T.astype(float)

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def max_total_order(self) -> int:
        """Largest total reaction order; the superhomogeneity exponent for mass action."""
        return max(r.total_order for r in self.reactions)

    def species_index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise ValidationError(f"unknown species {name!r}") from None

    def macro_rates(self, c: np.ndarray) -> np.ndarray:
        """Macroscopic rate vector at concentration ``c`` (requires ``c >= 0``)."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n_species,):
            raise ValidationError(f"expected concentration vector of length {self.n_species}")
        if np.any(c < 0):
            raise ValidationError("concentrations must be nonnegative")
        return np.array([r.kinetics.macro(r.alpha, c) for r in self.reactions])

    def macro_rates_grid(self, C: np.ndarray) -> np.ndarray:
        """Macroscopic rates row-wise for an (N, n_species) concentration array.

        Negative entries are clamped to zero before evaluation; integrators and
        rate-functional quadratures use this to tolerate sub-tolerance overshoot.
        """
        C = np.maximum(np.asarray(C, dtype=float), 0.0)
        out = np.empty((C.shape[0], self.n_reactions))
        for j, rxn in enumerate(self.reactions):
            if isinstance(rxn.kinetics, MassAction):
                col = np.full(C.shape[0], rxn.kinetics.kappa)
                for y in np.nonzero(rxn.alpha)[0]:
                    col = col * C[:, y] ** rxn.alpha[y]
                out[:, j] = col
            elif isinstance(rxn.kinetics, Constant):
                out[:, j] = rxn.kinetics.kappa
            else:
                out[:, j] = [rxn.kinetics.macro(rxn.alpha, c) for c in C]
        return out

    def micro_propensities(self, volume: int, n: np.ndarray) -> np.ndarray:
        """Microscopic propensity vector at count vector ``n`` and volume ``volume``."""
        n = np.asarray(n)
        if np.any(n < 0):
            raise ValidationError("molecule counts must be nonnegative")
        return np.array([r.kinetics.micro(r.alpha, volume, n) for r in self.reactions])

    def micro_propensities_grid(self, volume: int, N: np.ndarray) -> np.ndarray:
        """Microscopic propensities row-wise for an (M, n_species) count array.

        For mass action the falling-factorial product vanishes exactly when a
        count is below its requirement (a zero factor appears), so no gating
        is needed; constant kinetics is gated explicitly.
        """
        N = np.asarray(N)
        out = np.empty((N.shape[0], self.n_reactions))
        for j, rxn in enumerate(self.reactions):
            kin = rxn.kinetics
            if isinstance(kin, MassAction):
                col = np.full(N.shape[0], kin.kappa * float(volume) ** (1 - rxn.total_order))
                for y in np.nonzero(rxn.alpha)[0]:
                    ny = N[:, y].astype(float)
                    for q in range(int(rxn.alpha[y])):
                        col = col * (ny - q)
                out[:, j] = col
            elif isinstance(kin, Constant):
                blocked = np.any(N < rxn.alpha[None, :], axis=1)
                out[:, j] = np.where(blocked, 0.0, kin.kappa * volume)
            else:
                out[:, j] = [kin.micro(rxn.alpha, volume, n) for n in N]
        return out

    def macro_jacobian(self, c: np.ndarray) -> np.ndarray:
        """Jacobian of the macroscopic rate vector, shape (n_reactions, n_species)."""
        c = np.asarray(c, dtype=float)
        return np.array([r.kinetics.macro_gradient(r.alpha, c) for r in self.reactions])

    def with_flux_counters(self, reactions: list[int]) -> "ReactionNetwork":
        """Augmented network with a counter species per tracked reaction.

        Each counter is produced (+1) by its reaction and never consumed, so
        its count equals the number of firings; propensities are unchanged.
        Lets state-space solvers report flux counts jointly with counts.
        """
        extra = len(reactions)
        names = list(self.species) + [f"__flux{r}" for r in reactions]
        augmented = []
        for idx, rxn in enumerate(self.reactions):
            alpha = np.concatenate([rxn.alpha, np.zeros(extra, dtype=np.int64)])
            beta = np.concatenate([rxn.beta, np.zeros(extra, dtype=np.int64)])
            for slot, tracked in enumerate(reactions):
                if tracked == idx:
                    beta[self.n_species + slot] += 1
            augmented.append(Reaction(alpha, beta, rxn.kinetics))
        return ReactionNetwork(names, augmented)

    def with_scaled_rates(self, factors: np.ndarray) -> "ReactionNetwork":
        """New network with per-reaction rate constants multiplied by ``factors``.

        For constant-in-time tilts this realizes the tilted dynamics exactly.
        """
        factors = np.asarray(factors, dtype=float)
        if factors.shape != (self.n_reactions,):
            raise ValidationError(f"expected {self.n_reactions} scale factors")
        scaled = [
            Reaction(r.alpha, r.beta, r.kinetics.scaled(f))
            for r, f in zip(self.reactions, factors)
        ]
        return ReactionNetwork(list(self.species), scaled)

    def to_json(self) -> dict:
        """Canonical JSON form (fails for kinetics outside the two built-in kinds)."""
        reactions = []
        for r in self.reactions:
            if r.kinetics.kind not in ("mass-action", "constant"):
                raise ValidationError(f"kinetics kind {r.kinetics.kind!r} has no JSON form")
            reactions.append(
                {
                    "alpha": r.alpha.tolist(),
                    "beta": r.beta.tolist(),
                    "kinetics": {"kind": r.kinetics.kind, "kappa": r.kinetics.kappa},
                }
            )
        return {"species": list(self.species), "reactions": reactions}

    @classmethod
    def from_json(cls, data: dict | str) -> "ReactionNetwork":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            species = list(data["species"])
            reactions = []
            for entry in data["reactions"]:
                kin = entry["kinetics"]
                if kin["kind"] == "mass-action":
                    kinetics = MassAction(float(kin["kappa"]))
                elif kin["kind"] == "constant":
                    kinetics = Constant(float(kin["kappa"]))
                else:
                    raise ValidationError(f"unknown kinetics kind {kin['kind']!r}")
                reactions.append(
                    Reaction(np.asarray(entry["alpha"]), np.asarray(entry["beta"]), kinetics)
                )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed network JSON: {exc}") from exc
        return cls(species, reactions)


# --- DSL parsing ------------------------------------------------------------
#
# statement := complex "->" complex "@" kinetics
# complex   := "0" | term ("+" term)*        term := [integer] species-name
# kinetics  := "ma(" float ")" | "const(" float ")"
#
# One statement per line; ';' also separates statements; '#' starts a comment.

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_INT_RE = re.compile(r"\d+")
_FLOAT_RE = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?")


class _Cursor:
    def __init__(self, text: str, line: int, offset: int):
        self.text = text
        self.line = line
        self.offset = offset  # column of text[0] within the original line (0-based)
        self.pos = 0

    def error(self, message: str):
        raise NetworkSyntaxError(message, self.line, self.offset + self.pos + 1)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def take(self, literal: str) -> bool:
        self.skip_ws()
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str):
        if not self.take(literal):
            self.error(f"expected {literal!r}")

    def match(self, regex: re.Pattern) -> str | None:
        self.skip_ws()
        m = regex.match(self.text, self.pos)
        if m is None:
            return None
        self.pos = m.end()
        return m.group(0)


def _parse_complex(cur: _Cursor, species_order: dict[str, int]) -> dict[int, int]:
    counts: dict[int, int] = {}
    cur.skip_ws()
    # a bare "0" denotes the empty complex, unless it prefixes a species name
    if cur.text.startswith("0", cur.pos):
        probe = _Cursor(cur.text, cur.line, cur.offset)
        probe.pos = cur.pos + 1
        probe.skip_ws()
        if probe.match(_NAME_RE) is None:
            cur.pos += 1
            return counts
    while True:
        coeff_text = cur.match(_INT_RE)
        coeff = int(coeff_text) if coeff_text is not None else 1
        name = cur.match(_NAME_RE)
        if name is None:
            cur.error("expected species name")
        idx = species_order.setdefault(name, len(species_order))
        counts[idx] = counts.get(idx, 0) + coeff
        if not cur.take("+"):
            return counts


def _parse_kinetics(cur: _Cursor) -> Kinetics:
    for token, factory in (("ma", MassAction), ("const", Constant)):
        if cur.take(token):
            cur.expect("(")
            cur.skip_ws()
            value_pos = cur.pos
            value_text = cur.match(_FLOAT_RE)
            if value_text is None:
                cur.error("expected rate constant")
            cur.expect(")")
            value = float(value_text)
            if value < 0:
                cur.pos = value_pos
                cur.error(f"negative rate constant {value}")
            return factory(value)
    cur.error("expected kinetics 'ma(<float>)' or 'const(<float>)'")


def parse_network(text: str) -> ReactionNetwork:
    """Parse network DSL source into a :class:`ReactionNetwork`.

    Species are ordered by first appearance.  Raises
    :class:`~fluxldp.errors.NetworkSyntaxError` with a 1-based line/column
    on malformed input.
    """
    species_order: dict[str, int] = {}
    raw_reactions: list[tuple[dict[int, int], dict[int, int], Kinetics]] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        offset = 0
        for chunk in line.split(";"):
            cur = _Cursor(chunk, line_no, offset)
            offset += len(chunk) + 1
            if cur.at_end():
                continue
            lhs = _parse_complex(cur, species_order)
            cur.expect("->")
            rhs = _parse_complex(cur, species_order)
            cur.expect("@")
            kinetics = _parse_kinetics(cur)
            if not cur.at_end():
                cur.error("unexpected trailing input")
            raw_reactions.append((lhs, rhs, kinetics))
    if not raw_reactions:
        raise NetworkSyntaxError("no reactions found", max(1, text.count("\n") + 1), 1)
    n_species = len(species_order)
    species = [None] * n_species
    for name, idx in species_order.items():
        species[idx] = name
    reactions = []
    for lhs, rhs, kinetics in raw_reactions:
        alpha = np.zeros(n_species, dtype=np.int64)
        beta = np.zeros(n_species, dtype=np.int64)
        for idx, count in lhs.items():
            alpha[idx] = count
        for idx, count in rhs.items():
            beta[idx] = count
        reactions.append(Reaction(alpha, beta, kinetics))
    return ReactionNetwork(species, reactions)


def _render_complex(counts: np.ndarray, species: tuple[str, ...]) -> str:
    terms = []
    for y in np.nonzero(counts)[0]:
        coeff = int(counts[y])
        terms.append(species[y] if coeff == 1 else f"{coeff} {species[y]}")
    return " + ".join(terms) if terms else "0"


def render_network(net: ReactionNetwork) -> str:
    """Render a network back to canonical DSL text (one reaction per line)."""
    token = {"mass-action": "ma", "constant": "const"}
    lines = []
    for r in net.reactions:
        if r.kinetics.kind not in token:
            raise ValidationError(f"kinetics kind {r.kinetics.kind!r} has no DSL form")
        lines.append(
            f"{_render_complex(r.alpha, net.species)} -> "
            f"{_render_complex(r.beta, net.species)} @ "
            f"{token[r.kinetics.kind]}({r.kinetics.kappa!r})"
        )
    return "\n".join(lines) + "\n"


def simplex_contains(
    net: ReactionNetwork, c0: np.ndarray, c: np.ndarray, tol: float = 1e-9
) -> bool:
    """Whether ``c`` is reachable from ``c0`` by some nonnegative flux vector.

    Decides existence of ``w >= 0`` with ``||c - c0 - Gamma w||_inf <= tol``
    (and ``c >= -tol``) by minimizing the infinity-norm residual as a linear
    program.  ``tol`` absorbs floating-point rank deficiency of ``Gamma``.
    """
    c0 = np.asarray(c0, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(c0 < 0):
        raise ValidationError("base concentration must be nonnegative")
    if np.any(c < -tol):
        return False
    target = c - c0
    n_y, n_r = net.Gamma.shape
    # variables [w (n_r), t (1)]; minimize t s.t. -t <= target - Gamma w <= t, w >= 0
    cost = np.zeros(n_r + 1)
    cost[-1] = 1.0
    a_ub = np.zeros((2 * n_y, n_r + 1))
    a_ub[:n_y, :n_r] = net.Gamma
    a_ub[:n_y, -1] = -1.0
    a_ub[n_y:, :n_r] = -net.Gamma
    a_ub[n_y:, -1] = -1.0
    b_ub = np.concatenate([target, -target])
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * n_r + [(0, None)])
    if not res.success:
        return False
    return float(res.fun) <= tol
