"""Markov arrival processes and phase-type distributions.

A MAP is a pair (d0, d1) of equal-dimension square matrices: d0 holds the
rates of hidden transitions of the background chain, d1 the rates of active
(event-emitting) transitions, and d0 + d1 is a conservative generator.

A phase-type (PH) distribution is the absorption time of a finite chain.
The full generator representation used throughout places the absorbing
state first (row 0), which lets the cache input-output constructions
transcribe as plain block templates.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import DimensionError, ValidationError
from .kron import ProbabilityVector, RateMatrix, kron_sum, steady_state

__all__ = [
    "MarkovArrivalProcess",
    "PhaseTypeDistribution",
    "ValidationReport",
    "MapSampler",
    "PhSampler",
    "validate_map",
    "fundamental_rate",
    "superpose",
    "split",
    "ph_min",
    "ph_mean",
    "sample_map",
    "sample_ph",
    "poisson_map",
    "mmpp_map",
    "erlang_approximation",
]

_ROWSUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MarkovArrivalProcess:
    """MAP given by hidden (d0) and active (d1) rate matrices."""

    d0: RateMatrix
    d1: RateMatrix
    state_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if not (self.d0.is_square and self.d1.is_square):
            raise DimensionError("d0 and d1 must be square")
        if self.d0.rows != self.d1.rows:
            raise DimensionError("d0 and d1 must have equal dimension")
        if self.state_labels is not None and len(self.state_labels) != self.d0.rows:
            raise DimensionError("state_labels length must match the dimension")

    @property
    def order(self) -> int:
        return self.d0.rows

    @property
    def generator(self) -> RateMatrix:
        """Background-chain generator d0 + d1."""
        return self.d0 + self.d1

    def __eq__(self, other):
        if not isinstance(other, MarkovArrivalProcess):
            return NotImplemented
        return self.d0 == other.d0 and self.d1 == other.d1

    def __hash__(self):
        return hash((self.d0, self.d1))

    def __repr__(self):
        return f"MarkovArrivalProcess(order={self.order})"


@dataclass(frozen=True, eq=False)
class PhaseTypeDistribution:
    """PH distribution (s, pi): subintensity over transient phases plus initial vector."""

    s: RateMatrix
    pi: ProbabilityVector
    exit_rates: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.s.is_square:
            raise DimensionError("subintensity must be square")
        if self.s.rows != len(self.pi):
            raise DimensionError("initial vector length must match the subintensity order")
        diag = self.s.diagonal()
        if np.any(diag >= 0):
            raise ValidationError("subintensity diagonal must be strictly negative")
        off = self.s.row_idx != self.s.col_idx
        if np.any(self.s.data[off] < 0):
            raise ValidationError("subintensity off-diagonal entries must be nonnegative")
        exits = -self.s.row_sums()
        if np.any(exits < -_ROWSUM_TOL):
            raise ValidationError("subintensity row sums must be nonpositive")
        exits = np.clip(exits, 0.0, None)
        if not np.any(exits > 0):
            raise ValidationError("absorption unreachable: all exit rates are zero")
        exits.flags.writeable = False
        object.__setattr__(self, "exit_rates", exits)

    @property
    def order(self) -> int:
        return self.s.rows

    def full_generator(self) -> RateMatrix:
        """(m+1)-state generator with the absorbing state first."""
        m = self.order
        triplets = [(i + 1, 0, rate) for i, rate in enumerate(self.exit_rates) if rate != 0.0]
        triplets += [
            (int(r) + 1, int(c) + 1, float(v))
            for r, c, v in zip(self.s.row_idx, self.s.col_idx, self.s.data)
        ]
        return RateMatrix.from_triplets(m + 1, m + 1, triplets)

    @classmethod
    def exponential(cls, rate: float) -> "PhaseTypeDistribution":
        if rate <= 0:
            raise ValidationError("exponential rate must be positive")
        return cls(RateMatrix.from_dense([[-rate]]), ProbabilityVector([1.0]))

    @classmethod
    def erlang(cls, stages: int, rate: float) -> "PhaseTypeDistribution":
        """Erlang distribution: `stages` sequential phases, each at `rate`."""
        if stages < 1:
            raise ValidationError("erlang needs at least one stage")
        if rate <= 0:
            raise ValidationError("erlang rate must be positive")
        triplets = [(i, i, -rate) for i in range(stages)]
        triplets += [(i, i + 1, rate) for i in range(stages - 1)]
        pi = np.zeros(stages)
        pi[0] = 1.0
        return cls(RateMatrix.from_triplets(stages, stages, triplets), ProbabilityVector(pi))

    def __eq__(self, other):
        if not isinstance(other, PhaseTypeDistribution):
            return NotImplemented
        return self.s == other.s and self.pi == other.pi

    def __hash__(self):
        return hash((self.s, self.pi))

    def __repr__(self):
        return f"PhaseTypeDistribution(order={self.order})"


def erlang_approximation(value: float, stages: int = 20) -> PhaseTypeDistribution:
    """Erlang-k surrogate for a deterministic duration (mean matched, CV^2 = 1/k)."""
    if value <= 0:
        raise ValidationError("deterministic value must be positive")
    return PhaseTypeDistribution.erlang(stages, stages / value)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_map(m: MarkovArrivalProcess) -> ValidationReport:
    """Check all MAP invariants; returns a report rather than raising."""
    problems: list[str] = []
    d0, d1 = m.d0, m.d1
    neg_active = d1.data < 0
    for r, c in zip(d1.row_idx[neg_active], d1.col_idx[neg_active]):
        problems.append(f"negative active rate at ({r}, {c})")
    off = d0.row_idx != d0.col_idx
    neg_hidden = off & (d0.data < 0)
    for r, c in zip(d0.row_idx[neg_hidden], d0.col_idx[neg_hidden]):
        problems.append(f"negative hidden off-diagonal rate at ({r}, {c})")
    diag = d0.diagonal()
    for i in np.nonzero(diag >= 0)[0]:
        problems.append(f"nonnegative d0 diagonal at state {i}")
    sums = (d0 + d1).row_sums()
    for i in np.nonzero(np.abs(sums) > _ROWSUM_TOL)[0]:
        problems.append(f"row {i} of d0+d1 sums to {sums[i]:g}, not 0")
    if not problems and _d0_is_singular(d0):
        problems.append("d0 is singular")
    return ValidationReport(ok=not problems, violations=tuple(problems))


def _d0_is_singular(d0: RateMatrix) -> bool:
    try:
        lu = spla.splu(d0.to_csr().tocsc())
    except RuntimeError:
        return True
    u_diag = lu.U.diagonal()
    return bool(np.any(u_diag == 0) or not np.all(np.isfinite(u_diag)))


def require_valid(m: MarkovArrivalProcess) -> MarkovArrivalProcess:
    report = validate_map(m)
    if not report:
        raise ValidationError("invalid MAP: " + "; ".join(report.violations))
    return m


def fundamental_rate(m: MarkovArrivalProcess) -> float:
    """Long-run event rate p d1 1 for the stationary background vector p."""
    p = steady_state(m.generator)
    return float(np.sum(m.d1.to_csr().T @ p.entries))


def _product_labels(maps) -> tuple[str, ...] | None:
    if all(m.state_labels is None for m in maps):
        return None
    per_map = [
        m.state_labels if m.state_labels is not None else tuple(str(i) for i in range(m.order))
        for m in maps
    ]
    return tuple(",".join(combo) for combo in itertools.product(*per_map))


def superpose(maps) -> MarkovArrivalProcess:
    """Merge independent MAPs; matrices combine by Kronecker sums.

    State order is the Cartesian product of the input state spaces in
    lexicographic order (first argument outermost).
    """
    maps = list(maps)
    if not maps:
        raise ValidationError("superpose requires at least one MAP")
    d0, d1 = maps[0].d0, maps[0].d1
    for m in maps[1:]:
        d0 = kron_sum(d0, m.d0)
        d1 = kron_sum(d1, m.d1)
    return MarkovArrivalProcess(d0, d1, _product_labels(maps))


def split(m: MarkovArrivalProcess, p: ProbabilityVector) -> list[MarkovArrivalProcess]:
    """Thin a MAP into len(p) sub-processes routed with probabilities p.

    Component i keeps fraction p[i] of the active transitions; the rest
    become hidden, so every component shares the original background chain.
    """
    out = []
    for weight in p:
        d0 = m.d0 + m.d1.scale(1.0 - weight)
        d1 = m.d1.scale(weight)
        out.append(MarkovArrivalProcess(d0, d1, m.state_labels))
    return out


def ph_min(t1: PhaseTypeDistribution, t2: PhaseTypeDistribution) -> PhaseTypeDistribution:
    """Minimum of two independent PH distributions.

    The result has order m*q with subintensity s1 (+) s2 and initial vector
    pi1 (x) pi2. The argument order fixes the state order (first argument
    outermost) and is load-bearing for the min-policy cache construction.
    """
    s = kron_sum(t1.s, t2.s)
    pi = ProbabilityVector(np.kron(t1.pi.entries, t2.pi.entries))
    return PhaseTypeDistribution(s, pi)


def ph_mean(t: PhaseTypeDistribution) -> float:
    """Expected absorption time -pi s^{-1} 1."""
    try:
        y = spla.splu(t.s.to_csr().tocsc()).solve(np.ones(t.order))
    except RuntimeError as exc:
        raise ValidationError(f"singular subintensity: {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise ValidationError("singular subintensity")
    return float(-np.dot(t.pi.entries, y))


class MapSampler:
    """Stateful exact sampler for the joint chain (J(t), N(t)) of a MAP.

    Each jump waits an exponential holding time at the total exit rate of
    the current state and then picks a hidden or active transition with
    probability proportional to its rate; active transitions emit events.
    """

    __slots__ = (
        "time",
        "state",
        "_rng",
        "_targets",
        "_active",
        "_cum",
        "_scales",
        "_poisson_scale",
    )

    def __init__(self, m: MarkovArrivalProcess, rng, initial_state: int | None = None):
        n = m.order
        diag0 = m.d0.diagonal()
        exit_rates = -diag0
        if np.any(exit_rates <= 0):
            raise ValidationError("every state needs a positive total exit rate")
        targets: list[np.ndarray] = []
        active: list[np.ndarray] = []
        cum: list[np.ndarray] = []
        rates_by_state: list[list[tuple[int, float, bool]]] = [[] for _ in range(n)]
        for r, c, v in zip(m.d0.row_idx, m.d0.col_idx, m.d0.data):
            if r != c:
                rates_by_state[r].append((int(c), float(v), False))
        for r, c, v in zip(m.d1.row_idx, m.d1.col_idx, m.d1.data):
            rates_by_state[r].append((int(c), float(v), True))
        for j in range(n):
            entries = rates_by_state[j]
            if not entries:
                raise ValidationError(f"state {j} has no outgoing transitions")
            targets.append(np.array([t for t, _, _ in entries], dtype=np.int64))
            active.append(np.array([a for _, _, a in entries], dtype=bool))
            probs = np.array([v for _, v, _ in entries])
            cum.append(np.cumsum(probs / probs.sum()))
        self._targets = targets
        self._active = active
        self._cum = cum
        self._scales = 1.0 / exit_rates
        # every jump emits an event: skip the transition draw entirely
        if n == 1 and len(targets[0]) == 1 and bool(active[0][0]):
            self._poisson_scale = float(self._scales[0])
        else:
            self._poisson_scale = None
        self._rng = rng
        self.time = 0.0
        if initial_state is None:
            p = steady_state(m.generator)
            initial_state = int(rng.choice(n, p=p.entries))
        self.state = initial_state

    def next_event(self) -> float:
        """Advance to the next active transition; returns its absolute time."""
        rng = self._rng
        if self._poisson_scale is not None:
            self.time += rng.exponential(self._poisson_scale)
            return self.time
        while True:
            j = self.state
            self.time += rng.exponential(self._scales[j])
            k = int(np.searchsorted(self._cum[j], rng.random(), side="right"))
            k = min(k, self._cum[j].size - 1)
            self.state = int(self._targets[j][k])
            if self._active[j][k]:
                return self.time


def sample_map(
    m: MarkovArrivalProcess,
    horizon: int,
    rng,
    initial_state: int | None = None,
) -> np.ndarray:
    """Simulate `horizon` event times of a MAP; deterministic given the rng state."""
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    sampler = MapSampler(m, rng, initial_state)
    return np.fromiter((sampler.next_event() for _ in range(horizon)), dtype=np.float64, count=horizon)


class PhSampler:
    """Reusable jump-chain sampler for absorption times of a PH distribution."""

    __slots__ = ("_pi_cum", "_scales", "_targets", "_cum", "_order")

    def __init__(self, t: PhaseTypeDistribution):
        m = t.order
        s_dense = t.s.to_dense()
        self._order = m
        self._pi_cum = np.cumsum(t.pi.entries)
        self._scales = -1.0 / np.diag(s_dense)
        targets, cum = [], []
        for phase in range(m):
            rates = s_dense[phase].copy()
            rates[phase] = 0.0
            rates = np.append(rates, t.exit_rates[phase])
            keep = rates > 0
            targets.append(np.nonzero(keep)[0])
            cum.append(np.cumsum(rates[keep]) / rates[keep].sum())
        self._targets = targets
        self._cum = cum

    def sample(self, rng) -> float:
        m = self._order
        phase = int(np.searchsorted(self._pi_cum, rng.random(), side="right"))
        phase = min(phase, m - 1)
        elapsed = 0.0
        while True:
            elapsed += rng.exponential(self._scales[phase])
            c = self._cum[phase]
            k = min(int(np.searchsorted(c, rng.random(), side="right")), c.size - 1)
            nxt = int(self._targets[phase][k])
            if nxt == m:
                return elapsed
            phase = nxt


def sample_ph(t: PhaseTypeDistribution, rng) -> float:
    """Draw one absorption time of a PH distribution by jump-chain simulation."""
    return PhSampler(t).sample(rng)


def poisson_map(rate: float) -> MarkovArrivalProcess:
    """One-state MAP of a Poisson process."""
    if rate <= 0:
        raise ValidationError("rate must be positive")
    return MarkovArrivalProcess(
        RateMatrix.from_dense([[-rate]]), RateMatrix.from_dense([[rate]])
    )


def mmpp_map(q, rates) -> MarkovArrivalProcess:
    """Markov-modulated Poisson process: modulating generator q, per-state rates."""
    q = q if isinstance(q, RateMatrix) else RateMatrix.from_dense(q)
    rates = np.asarray(rates, dtype=np.float64)
    if rates.ndim != 1 or rates.size != q.rows:
        raise DimensionError("rates length must match the modulating chain dimension")
    if np.any(rates < 0):
        raise ValidationError("MMPP rates must be nonnegative")
    n = q.rows
    d1 = RateMatrix.from_triplets(n, n, [(i, i, r) for i, r in enumerate(rates) if r != 0.0])
    d0 = q + d1.scale(-1.0)
    return MarkovArrivalProcess(d0, d1)
