"""Path containers: exact jump trajectories, grid paths and tilt protocols.

``JumpPath`` stores an exact cadlag trajectory of the volume-``V`` jump
process as an initial count vector plus ordered jump events; concentrations
and integrated fluxes at any time follow exactly from integer arithmetic,
so the continuity equation ``c(t) = c(0) + Gamma w(t)`` holds to the bit.

``GridPath`` is the uniform-grid piecewise-linear (c, w) representation used
by the fluid solvers and the rate-functional quadratures; its derivatives
are extracted by centered finite differences (one-sided at the endpoints).

``TiltProtocol`` holds a per-reaction tilt ``zeta`` sampled on a uniform
grid and interpreted piecewise-linearly in time.  Jump rates get multiplied
by ``exp(zeta_r(t))``; the helper :meth:`TiltProtocol.from_species_tilt`
builds the per-reaction tilt ``zeta_r = xi . gamma_r`` induced by a
species-indexed tilt ``xi``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = ["JumpPath", "GridPath", "TiltProtocol"]


def _uniform_grid(horizon: float, steps: int) -> np.ndarray:
    if steps < 2:
        raise ValidationError(f"grid needs at least 2 steps, got {steps}")
    return np.linspace(0.0, horizon, steps + 1)


class TiltProtocol:
    """Per-reaction tilt values on a uniform time grid, piecewise linear in t."""

    def __init__(
        self,
        times: np.ndarray,
        zeta: np.ndarray,
        compact_support: bool = False,
        support_margin: float = 0.0,
    ):
        times = np.asarray(times, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise ValidationError("tilt grid needs at least two time points")
        if zeta.ndim != 2 or zeta.shape[0] != len(times):
            raise ValidationError("zeta must have shape (len(times), n_reactions)")
        if not np.all(np.isfinite(zeta)):
            raise ValidationError("tilt values must be finite")
        dt = np.diff(times)
        if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValidationError("tilt grid must be uniform and increasing")
        self.times = times
        self.zeta = zeta
        self.compact_support = compact_support
        self.support_margin = float(support_margin)
        if compact_support:
            margin = self.support_margin
            if margin <= 0:
                raise ValidationError("compact support requires a positive margin")
            horizon = times[-1]
            edge = (times <= margin + 1e-12 * horizon) | (times >= horizon - margin - 1e-12 * horizon)
            if np.any(zeta[edge] != 0.0):
                raise ValidationError("compact-support tilt must vanish on its margins")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_reactions(self) -> int:
        return self.zeta.shape[1]

    @classmethod
    def constant(cls, theta: np.ndarray, horizon: float, steps: int = 2) -> "TiltProtocol":
        """Time-constant tilt with value ``theta`` (one entry per reaction)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        times = _uniform_grid(horizon, steps)
        return cls(times, np.tile(theta, (len(times), 1)))

    @classmethod
    def from_function(
        cls, fn, horizon: float, steps: int, n_reactions: int, **kwargs
    ) -> "TiltProtocol":
        """Sample ``fn(t) -> vector over reactions`` on a uniform grid."""
        times = _uniform_grid(horizon, steps)
        zeta = np.array([np.broadcast_to(fn(t), (n_reactions,)) for t in times], dtype=float)
        return cls(times, zeta, **kwargs)

    @classmethod
    def from_species_tilt(
        cls, net, xi: np.ndarray, horizon: float, steps: int = 2
    ) -> "TiltProtocol":
        """Per-reaction tilt ``zeta_r = xi . gamma_r`` from a species tilt ``xi``."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (net.n_species,):
            raise ValidationError(f"expected species tilt of length {net.n_species}")
        return cls.constant(net.gamma_matrix @ xi, horizon, steps)

    def zeros_like(self) -> "TiltProtocol":
        return TiltProtocol(self.times, np.zeros_like(self.zeta))

    def eval(self, t) -> np.ndarray:
        """Piecewise-linear tilt value(s); scalar t gives (R,), array gives (N, R)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < -1e-12) or np.any(t_arr > self.horizon * (1 + 1e-12)):
            raise ValidationError("tilt evaluated outside [0, horizon]")
        dt = self.times[1] - self.times[0]
        k = np.clip((t_arr / dt).astype(int), 0, len(self.times) - 2)
        frac = (t_arr - self.times[k]) / dt
        frac = np.clip(frac, 0.0, 1.0)[:, None]
        out = (1.0 - frac) * self.zeta[k] + frac * self.zeta[k + 1]
        return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out

    def max_per_reaction(self) -> np.ndarray:
        """Per-reaction maximum over time (attained at grid nodes)."""
        return self.zeta.max(axis=0)

    def constant_value(self) -> np.ndarray | None:
        """The tilt vector if it is constant in time, else None."""
        if np.all(self.zeta == self.zeta[0]):
            return self.zeta[0].copy()
        return None

    def resampled(self, times: np.ndarray) -> np.ndarray:
        """Tilt values interpolated onto an arbitrary time grid, shape (N, R)."""
        return self.eval(np.asarray(times, dtype=float))

    def integrate_exp(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Exact ``int_a^b exp(zeta_r(t)) dt`` for each reaction, shape (N, R).

        Piecewise-linear zeta admits a closed-form antiderivative per piece;
        knot-prefix sums make the evaluation O(1) per query after setup.
        """
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        return self._exp_antideriv(b) - self._exp_antideriv(a)

    def _exp_antideriv(self, t: np.ndarray) -> np.ndarray:
        if not hasattr(self, "_prefix"):
            dt = self.times[1] - self.times[0]
            ez = np.exp(self.zeta)
            slope = np.diff(self.zeta, axis=0) / dt
            # expm1 keeps full precision for small slopes (no cancellation)
            small = np.abs(slope) * dt <= 1e-12
            ratio = np.where(
                small,
                dt * (1.0 + 0.5 * slope * dt),
                np.expm1(slope * dt) / np.where(slope == 0.0, 1.0, slope),
            )
            pieces = ez[:-1] * ratio
            prefix = np.zeros_like(self.zeta)
            prefix[1:] = np.cumsum(pieces, axis=0)
            self._prefix = prefix
            self._slopes = slope
        dt = self.times[1] - self.times[0]
        k = np.clip((t / dt).astype(int), 0, len(self.times) - 2)
        tau = np.clip(t - self.times[k], 0.0, dt)[:, None]
        z0 = self.zeta[k]
        b = self._slopes[k]
        small = np.abs(b) * tau <= 1e-12
        partial = np.where(
            small,
            tau * np.exp(z0) * (1.0 + 0.5 * b * tau),
            np.exp(z0) * np.expm1(b * tau) / np.where(b == 0.0, 1.0, b),
        )
        return self._prefix[k] + partial

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "zeta": self.zeta.tolist(),
            "compact_support": self.compact_support,
            "support_margin": self.support_margin,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TiltProtocol":
        return cls(
            np.asarray(data["times"]),
            np.asarray(data["zeta"]),
            bool(data.get("compact_support", False)),
            float(data.get("support_margin", 0.0)),
        )


@dataclass
class GridPath:
    """Uniform-grid (c, w) path in concentration / flux-per-volume units."""

    times: np.ndarray
    c: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 3:
            raise ValidationError("grid path needs at least 3 time points")
        dt = np.diff(self.times)
        if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValidationError("grid must be uniform and increasing")
        if self.c.shape[0] != len(self.times) or self.w.shape[0] != len(self.times):
            raise ValidationError("c and w must have one row per grid time")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_species(self) -> int:
        return self.c.shape[1]

    @property
    def n_reactions(self) -> int:
        return self.w.shape[1]

    def deriv_w(self) -> np.ndarray:
        """Flux rates by centered differences (one-sided at the endpoints)."""
        return self._centered(self.w)

    def deriv_c(self) -> np.ndarray:
        return self._centered(self.c)

    def _centered(self, values: np.ndarray) -> np.ndarray:
        dt = self.dt
        out = np.empty_like(values)
        out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
        out[0] = (values[1] - values[0]) / dt
        out[-1] = (values[-1] - values[-2]) / dt
        return out

    def continuity_residual(self, gamma_columns: np.ndarray) -> float:
        """max_k || c(t_k) - c(0) - Gamma w(t_k) ||_inf for Gamma = gamma_columns."""
        recon = self.c[0][None, :] + self.w @ gamma_columns.T
        return float(np.max(np.abs(self.c - recon)))

    def sup_distance(self, other: "GridPath") -> float:
        """Sup over grid times of the max-norm distance in (c, w) jointly."""
        if len(self.times) != len(other.times):
            raise ValidationError("grid paths must share a grid")
        gap_c = np.max(np.abs(self.c - other.c))
        gap_w = np.max(np.abs(self.w - other.w))
        return float(max(gap_c, gap_w))

    def to_csv(self, species: list[str] | None = None, comments: list[str] | None = None) -> str:
        """Delimited export; header 't, c:<species>..., w:<reaction-index>...'."""
        names = species if species is not None else [str(y) for y in range(self.n_species)]
        header = ",".join(
            ["t"] + [f"c:{s}" for s in names] + [f"w:{r}" for r in range(self.n_reactions)]
        )
        buf = io.StringIO()
        for line in comments or []:
            buf.write(f"# {line}\n")
        buf.write(header + "\n")
        for k in range(len(self.times)):
            row = [self.times[k], *self.c[k], *self.w[k]]
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridPath":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines:
            raise ValidationError("empty grid-path CSV")
        header = [col.strip() for col in lines[0].split(",")]
        if header[0] != "t":
            raise ValidationError("grid-path CSV must start with a 't' column")
        c_cols = [i for i, col in enumerate(header) if col.startswith("c:")]
        w_cols = [i for i, col in enumerate(header) if col.startswith("w:")]
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        return cls(data[:, 0], data[:, c_cols], data[:, w_cols])

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "c": self.c.tolist(),
            "w": self.w.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "GridPath":
        return cls(
            np.asarray(data["times"]),
            np.asarray(data["c"]),
            np.asarray(data["w"]),
            dict(data.get("meta", {})),
        )


_BINARY_MAGIC = b"FXJP"


@dataclass
class JumpPath:
    """Exact trajectory of the jump process: initial counts plus ordered events.

    ``c0`` holds molecule counts (concentration = counts / volume); ``times``
    and ``reactions`` list the jump events in (0, horizon].  ``gamma_matrix``
    (one row per reaction) is carried along so the path can be evaluated
    without the producing network.
    """

    volume: int
    c0: np.ndarray
    times: np.ndarray
    reactions: np.ndarray
    horizon: float
    gamma_matrix: np.ndarray
    validate: bool = True

    def __post_init__(self):
        self.c0 = np.asarray(self.c0, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=float)
        self.reactions = np.asarray(self.reactions, dtype=np.int32)
        self.gamma_matrix = np.asarray(self.gamma_matrix, dtype=np.int64)
        if self.volume < 1:
            raise ValidationError("volume must be a positive integer")
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if np.any(self.c0 < 0):
            raise ValidationError("initial counts must be nonnegative")
        if self.validate:
            self._check_invariants()

    def _check_invariants(self):
        if len(self.times) != len(self.reactions):
            raise ValidationError("event times and reaction ids must align")
        if len(self.times):
            if self.times[0] <= 0 or self.times[-1] > self.horizon:
                raise ValidationError("event times must lie in (0, horizon]")
            if np.any(np.diff(self.times) <= 0):
                raise ValidationError("event times must be strictly increasing")
            counts = self.c0[None, :] + np.cumsum(self.gamma_matrix[self.reactions], axis=0)
            if counts.min() < 0:
                raise ValidationError("molecule counts go negative along the path")

    @property
    def n_events(self) -> int:
        return len(self.times)

    @property
    def n_species(self) -> int:
        return len(self.c0)

    @property
    def n_reactions(self) -> int:
        return self.gamma_matrix.shape[0]

    @property
    def events(self) -> list[tuple[float, int]]:
        return [(float(t), int(r)) for t, r in zip(self.times, self.reactions)]

    def counts_after_events(self) -> np.ndarray:
        """Count vectors on the inter-event segments, shape (n_events + 1, n_species)."""
        counts = np.empty((self.n_events + 1, self.n_species), dtype=np.int64)
        counts[0] = self.c0
        if self.n_events:
            counts[1:] = self.c0[None, :] + np.cumsum(self.gamma_matrix[self.reactions], axis=0)
        return counts

    def eval(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Right-continuous (concentration, flux) at time ``t``."""
        if t < 0 or t > self.horizon:
            raise ValidationError(f"time {t} outside [0, {self.horizon}]")
        k = int(np.searchsorted(self.times, t, side="right"))
        w_counts = np.bincount(self.reactions[:k], minlength=self.n_reactions)
        w = w_counts / self.volume
        c = self.c0 / self.volume + self.gamma_matrix.T @ w
        return c, w

    def to_grid(self, steps: int) -> GridPath:
        """Sample (c, w) on a uniform grid; records total variation in ``meta``."""
        times = _uniform_grid(self.horizon, steps)
        idx = np.searchsorted(self.times, times, side="right")
        w = np.zeros((len(times), self.n_reactions))
        for r in range(self.n_reactions):
            prefix = np.concatenate([[0], np.cumsum(self.reactions == r)])
            w[:, r] = prefix[idx] / self.volume
        c = self.c0[None, :] / self.volume + w @ self.gamma_matrix.astype(float)
        return GridPath(times, c, w, meta={"tv": self.n_events / self.volume})

    def to_json(self) -> dict:
        return {
            "V": int(self.volume),
            "c0": self.c0.tolist(),
            "T": self.horizon,
            "events": [[float(t), int(r)] for t, r in zip(self.times, self.reactions)],
        }

    @classmethod
    def from_json(cls, data: dict, net) -> "JumpPath":
        events = data.get("events", [])
        times = np.array([e[0] for e in events], dtype=float)
        reactions = np.array([e[1] for e in events], dtype=np.int32)
        return cls(
            int(data["V"]),
            np.asarray(data["c0"]),
            times,
            reactions,
            float(data["T"]),
            net.gamma_matrix,
        )

    def to_binary(self) -> bytes:
        """Columnar binary form: little-endian f64 times, u32 reaction ids."""
        head = struct.pack(
            "<4sIQdI", _BINARY_MAGIC, 1, self.volume, self.horizon, self.n_species
        )
        head += struct.pack(f"<{self.n_species}q", *self.c0.tolist())
        head += struct.pack("<Q", self.n_events)
        body = self.times.astype("<f8").tobytes() + self.reactions.astype("<u4").tobytes()
        return head + body

    @classmethod
    def from_binary(cls, blob: bytes, net) -> "JumpPath":
        magic, version, volume, horizon, n_species = struct.unpack_from("<4sIQdI", blob, 0)
        if magic != _BINARY_MAGIC or version != 1:
            raise ValidationError("unrecognized jump-path binary header")
        off = struct.calcsize("<4sIQdI")
        c0 = np.array(struct.unpack_from(f"<{n_species}q", blob, off))
        off += 8 * n_species
        (n_events,) = struct.unpack_from("<Q", blob, off)
        off += 8
        times = np.frombuffer(blob, dtype="<f8", count=n_events, offset=off).astype(float)
        off += 8 * n_events
        reactions = np.frombuffer(blob, dtype="<u4", count=n_events, offset=off).astype(np.int32)
        return cls(int(volume), c0, times, reactions, float(horizon), net.gamma_matrix)
