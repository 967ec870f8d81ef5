"""Renewal-line cache analysis via exponential tilting of stopped sums.

A cache fed by a renewal request process X and an independent TTL process T
has inter-miss times distributed as the stopped sum S_tau = X_1 + ... +
X_tau, where the stopping rule depends on the policy:

* R (reset on request): stop at the first t with X_t > T_t.
* Sigma (reset on miss): stop at the first t with X_1 + ... + X_t > T_1.
* min(Sigma, R): the earlier of the two rules, with independent TTLs.

The Laplace transform of S_tau equals the expectation of L_omega(X)^tau
under the fractionally tilted measure that reweights only the law of X by
exp(-omega x) / L_omega(X) and leaves the TTL law untouched; X and T stay
independent under the tilt. Closed forms exist for the exponential and
deterministic families; the remaining cases are evaluated by a tilted
convolution series (Sigma) or by Monte Carlo under the tilted measure
(min), both of which this module implements.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.integrate
import scipy.signal
import scipy.special

from .errors import (
    ConvergenceError,
    DivergentStoppingTimeError,
    ValidationError,
)

__all__ = [
    "RenewalSpec",
    "Exponential",
    "Deterministic",
    "Erlang",
    "Tabulated",
    "TiltedDistribution",
    "StoppingPolicy",
    "MonteCarloValue",
    "RenewalHitMiss",
    "combine_estimates",
    "tilt",
    "transform_r",
    "transform_sigma",
    "transform_min",
    "hit_miss_renewal",
    "occupancy_renewal",
    "expected_stopped_sum",
    "expected_tau",
    "table1_reference",
]

_TAIL_EPS = 1e-9


class RenewalSpec:
    """One-dimensional inter-event (or TTL) distribution descriptor."""

    kind = "abstract"

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def laplace(self, omega: float) -> float:
        """Laplace transform E[exp(-omega X)]."""
        raise NotImplementedError

    def cdf(self, x):
        """P(X <= x); accepts scalars or arrays."""
        raise NotImplementedError

    def survival_geq(self, x):
        """P(X >= x), with atoms counted (matters for deterministic laws)."""
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def truncation_point(self, eps: float) -> float:
        """Smallest x with P(X > x) <= eps."""
        raise NotImplementedError

    def integral_survival(self, x: float) -> float:
        """Integral of P(X > u) over u in [0, x]; equals E[min(X, x)]."""
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(RenewalSpec):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        if self.rate <= 0:
            raise ValidationError("exponential rate must be positive")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def laplace(self, omega):
        return self.rate / (self.rate + omega)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * x), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, -np.expm1(-self.rate * x), 0.0)

    def survival_geq(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0, np.exp(-self.rate * x))

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def truncation_point(self, eps):
        return -math.log(eps) / self.rate

    def integral_survival(self, x):
        return float(-np.expm1(-self.rate * x) / self.rate)


@dataclass(frozen=True)
class Deterministic(RenewalSpec):
    value: float
    kind = "deterministic"

    def __post_init__(self):
        if self.value <= 0:
            raise ValidationError("deterministic value must be positive")

    @property
    def mean(self) -> float:
        return self.value

    def laplace(self, omega):
        return math.exp(-omega * self.value)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.value, 1.0, 0.0)

    def survival_geq(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.value, 1.0, 0.0)

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def truncation_point(self, eps):
        return self.value

    def integral_survival(self, x):
        return min(x, self.value)


@dataclass(frozen=True)
class Erlang(RenewalSpec):
    stages: int
    rate: float
    kind = "erlang"

    def __post_init__(self):
        if self.stages < 1:
            raise ValidationError("erlang needs at least one stage")
        if self.rate <= 0:
            raise ValidationError("erlang rate must be positive")

    @property
    def mean(self) -> float:
        return self.stages / self.rate

    def laplace(self, omega):
        return (self.rate / (self.rate + omega)) ** self.stages

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        k, th = self.stages, self.rate
        with np.errstate(divide="ignore", invalid="ignore"):
            out = th**k * x ** (k - 1) * np.exp(-th * x) / math.factorial(k - 1)
        return np.where(x >= 0, out, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, scipy.special.gammainc(self.stages, self.rate * x), 0.0)

    def survival_geq(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0, scipy.special.gammaincc(self.stages, self.rate * x))

    def sample(self, rng, size=None):
        return rng.gamma(self.stages, 1.0 / self.rate, size)

    def truncation_point(self, eps):
        return float(scipy.special.gammainccinv(self.stages, eps)) / self.rate

    def integral_survival(self, x):
        js = np.arange(1, self.stages + 1)
        return float(np.sum(scipy.special.gammainc(js, self.rate * x))) / self.rate


@dataclass(frozen=True, eq=False)
class Tabulated(RenewalSpec):
    """Density sampled on a uniform grid; cell i covers [i*step, (i+1)*step)
    with its probability mass placed at the cell midpoint."""

    step: float
    density: np.ndarray
    kind = "tabulated"

    def __init__(self, step: float, density):
        if step <= 0:
            raise ValidationError("grid step must be positive")
        values = np.asarray(density, dtype=np.float64).copy()
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("density must be a nonempty one-dimensional array")
        if np.any(values < 0):
            raise ValidationError("density values must be nonnegative")
        total = values.sum() * step
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(f"tabulated density integrates to {total!r}, not 1")
        values.flags.writeable = False
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "density", values)

    @property
    def points(self) -> np.ndarray:
        return (np.arange(self.density.size) + 0.5) * self.step

    @property
    def masses(self) -> np.ndarray:
        m = self.density * self.step
        return m / m.sum()

    @property
    def mean(self) -> float:
        return float(np.dot(self.points, self.masses))

    def laplace(self, omega):
        return float(np.dot(np.exp(-omega * self.points), self.masses))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        idx = np.searchsorted(self.points, x, side="right")
        return cum[idx]

    def survival_geq(self, x):
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        idx = np.searchsorted(self.points, x, side="left")
        return 1.0 - cum[idx]

    def sample(self, rng, size=None):
        return rng.choice(self.points, size=size, p=self.masses)

    def truncation_point(self, eps):
        tail = 1.0 - np.cumsum(self.masses)
        idx = int(np.searchsorted(-tail, -eps))
        idx = min(idx, self.density.size - 1)
        return float(self.points[idx])

    def integral_survival(self, x):
        # survival is a step function dropping at each atom
        pts, masses = self.points, self.masses
        surv_left = 1.0 - np.concatenate([[0.0], np.cumsum(masses)[:-1]])
        prev = np.concatenate([[0.0], pts[:-1]])
        seg = np.minimum(pts, x) - np.minimum(prev, x)
        return float(np.dot(np.clip(seg, 0.0, None), surv_left))

    def __eq__(self, other):
        if not isinstance(other, Tabulated):
            return NotImplemented
        return self.step == other.step and np.array_equal(self.density, other.density)

    def __hash__(self):
        return hash((self.step, self.density.tobytes()))


@dataclass(frozen=True)
class TiltedDistribution:
    """Exponentially tilted inter-request law.

    `law` carries the tilted distribution itself (density proportional to
    exp(-omega x) times the base density), `lx` the normalizer
    L_omega(base). Tilting at omega = 0 returns the base law unchanged, and
    TTL laws are never tilted.
    """

    base: RenewalSpec
    omega: float
    lx: float
    law: RenewalSpec


def tilt(x: RenewalSpec, omega: float) -> TiltedDistribution:
    """Tilt the law of X by exp(-omega x); the normalizer is L_omega(X)."""
    if omega < 0:
        raise ValidationError("tilting requires omega >= 0")
    if isinstance(x, Exponential):
        return TiltedDistribution(x, omega, x.laplace(omega), Exponential(x.rate + omega))
    if isinstance(x, Deterministic):
        return TiltedDistribution(x, omega, x.laplace(omega), x)
    if isinstance(x, Erlang):
        return TiltedDistribution(
            x, omega, x.laplace(omega), Erlang(x.stages, x.rate + omega)
        )
    if isinstance(x, Tabulated):
        weights = np.exp(-omega * x.points) * x.density
        lx = float(weights.sum() * x.step)
        if lx <= 0:
            raise ValidationError("tilted density has no mass")
        return TiltedDistribution(x, omega, x.laplace(omega), Tabulated(x.step, weights / lx))
    raise ValidationError(f"unsupported distribution kind: {x!r}")


@dataclass(frozen=True)
class StoppingPolicy:
    """Eviction rule plus its TTL law(s): tag R, Sigma, or MinSigmaR."""

    tag: str
    ttl: RenewalSpec | None = None
    ttl_sigma: RenewalSpec | None = None
    ttl_r: RenewalSpec | None = None

    def __post_init__(self):
        if self.tag in ("R", "Sigma"):
            if self.ttl is None or self.ttl_sigma is not None or self.ttl_r is not None:
                raise ValidationError(f"policy {self.tag} carries exactly one TTL spec")
        elif self.tag == "MinSigmaR":
            if self.ttl is not None or self.ttl_sigma is None or self.ttl_r is None:
                raise ValidationError("policy MinSigmaR carries exactly two TTL specs")
        else:
            raise ValidationError(f"unknown policy tag {self.tag!r}")

    @classmethod
    def reset_on_request(cls, ttl: RenewalSpec) -> "StoppingPolicy":
        return cls("R", ttl=ttl)

    @classmethod
    def reset_on_miss(cls, ttl: RenewalSpec) -> "StoppingPolicy":
        return cls("Sigma", ttl=ttl)

    @classmethod
    def min_of(cls, ttl_sigma: RenewalSpec, ttl_r: RenewalSpec) -> "StoppingPolicy":
        return cls("MinSigmaR", ttl_sigma=ttl_sigma, ttl_r=ttl_r)


class MonteCarloValue(NamedTuple):
    value: float
    stderr: float


def combine_estimates(estimates) -> MonteCarloValue:
    """Merge independent Monte-Carlo estimates by inverse-variance weighting.

    An estimate with stderr 0 is exact and is returned as-is.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValidationError("no estimates to combine")
    for est in estimates:
        if est.stderr == 0.0:
            return est
    weights = [1.0 / est.stderr**2 for est in estimates]
    total = sum(weights)
    value = sum(w * est.value for w, est in zip(weights, estimates)) / total
    return MonteCarloValue(value, math.sqrt(1.0 / total))


@dataclass(frozen=True)
class RenewalHitMiss:
    hit: float
    miss: float
    stderr: float | None = None


def _psi(x: RenewalSpec, t: RenewalSpec, omega: float) -> float:
    """E[exp(-omega X) 1{X <= T}], the weight of in-cache requests."""
    if isinstance(x, Deterministic):
        return math.exp(-omega * x.value) * float(t.survival_geq(x.value))
    if isinstance(t, Exponential):
        return x.laplace(omega + t.rate)
    if isinstance(t, Deterministic):
        tilted = tilt(x, omega)
        return tilted.lx * float(tilted.law.cdf(t.value))
    if isinstance(t, Tabulated):
        tilted = tilt(x, omega)
        return tilted.lx * float(np.dot(t.masses, tilted.law.cdf(t.points)))
    if isinstance(x, Tabulated):
        return float(
            np.dot(np.exp(-omega * x.points) * x.masses, t.survival_geq(x.points))
        )
    upper = x.truncation_point(1e-14)
    value, _ = scipy.integrate.quad(
        lambda u: math.exp(-omega * u) * float(x.pdf(u)) * float(t.survival_geq(u)),
        0.0,
        upper,
        limit=200,
    )
    return value


def transform_r(x: RenewalSpec, t: RenewalSpec, omega: float) -> float:
    """Laplace transform of the inter-miss time of a reset-on-request cache.

    Evaluates (L_omega(X) - psi) / (1 - psi) with psi = E[e^{-omega X}
    1{X <= T}]; requires psi < 1.
    """
    if omega < 0:
        raise ValidationError("omega must be nonnegative")
    psi = _psi(x, t, omega)
    if psi >= 1.0:
        raise DivergentStoppingTimeError(
            "psi(omega) >= 1: requests never outlast the TTL, the cache never misses"
        )
    return (x.laplace(omega) - psi) / (1.0 - psi)


def _discretize_cell_masses(law: RenewalSpec, step: float, n_cells: int) -> np.ndarray:
    """Probability mass of [i*step, (i+1)*step) for i < n_cells (midpoint atoms)."""
    if isinstance(law, Tabulated):
        if not math.isclose(law.step, step):
            raise ValidationError("tabulated law must share the evaluation grid step")
        masses = law.masses
        if masses.size >= n_cells:
            return masses[:n_cells].copy()
        return np.concatenate([masses, np.zeros(n_cells - masses.size)])
    edges = np.arange(n_cells + 1) * step
    return np.diff(law.cdf(edges))


def _ttl_weights(t: RenewalSpec, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation points and weights representing the (untilted) TTL law."""
    if isinstance(t, Deterministic):
        return np.array([t.value]), np.array([1.0])
    if isinstance(t, Tabulated):
        return t.points, t.masses
    upper = t.truncation_point(_TAIL_EPS)
    n_cells = max(1, int(math.ceil(upper / step)))
    weights = _discretize_cell_masses(t, step, n_cells)
    total = weights.sum()
    if total <= 0:
        raise ValidationError("TTL law has no representable mass")
    points = (np.arange(n_cells) + 0.5) * step
    return points, weights / total


def transform_sigma(
    x: RenewalSpec,
    t: RenewalSpec,
    omega: float,
    tol: float = 1e-10,
    method: str = "auto",
    step: float | None = None,
    max_terms: int = 100_000,
) -> float:
    """Laplace transform of the inter-miss time of a reset-on-miss cache.

    The general value is the series sum over t >= 1 of L_omega(X)^t times
    the tilted-measure probability that exactly t requests fit inside one
    TTL. Closed forms are used where available:

    * exponential TTL: identical to the reset-on-request transform (the
      memorylessness collapse), via psi = L_X(omega + mu);
    * exponential requests: L_T(omega) * lambda / (lambda + omega);
    * deterministic requests: a direct geometric-style sum.

    Otherwise the series is evaluated on a uniform grid (default step
    mean(X)/200) with tilted convolution powers, truncated once the
    geometric tail bound drops below `tol`.

    Parameters
    ----------
    method : {"auto", "closed", "series"}
        "auto" prefers closed forms; "series" forces the numerical path.
    """
    if omega < 0:
        raise ValidationError("omega must be nonnegative")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if method not in ("auto", "closed", "series"):
        raise ValidationError(f"unknown method {method!r}")

    if method != "series":
        if isinstance(t, Exponential):
            psi = x.laplace(omega + t.rate)
            return (x.laplace(omega) - psi) / (1.0 - psi)
        if isinstance(x, Exponential):
            return t.laplace(omega) * x.rate / (x.rate + omega)
        if isinstance(x, Deterministic):
            return _sigma_deterministic_requests(x, t, omega, tol, max_terms)
        if method == "closed":
            raise ValidationError("no closed form for this request/TTL combination")

    return _sigma_series(x, t, omega, tol, step, max_terms)


def _sigma_deterministic_requests(
    x: Deterministic, t: RenewalSpec, omega: float, tol: float, max_terms: int
) -> float:
    lx = math.exp(-omega * x.value)
    total = 0.0
    cum = 0.0
    prev = 1.0  # P(T >= 0)
    for k in range(1, max_terms + 1):
        cur = float(t.survival_geq(k * x.value))
        term = prev - cur
        total += lx**k * term
        cum += term
        prev = cur
        if lx ** (k + 1) * max(0.0, 1.0 - cum) < tol:
            return total
    raise ConvergenceError("series for deterministic requests did not converge")


def _sigma_series(
    x: RenewalSpec,
    t: RenewalSpec,
    omega: float,
    tol: float,
    step: float | None,
    max_terms: int,
) -> float:
    tilted = tilt(x, omega)
    lx = tilted.lx
    if isinstance(x, Tabulated):
        step = x.step
    elif step is None:
        step = x.mean / 200.0
    if isinstance(tilted.law, Deterministic):
        return _sigma_deterministic_requests(
            Deterministic(tilted.law.value), t, omega, tol, max_terms
        )
    points, weights = _ttl_weights(t, step)
    x_max = float(points.max())
    n_cells = max(1, int(math.ceil(x_max / step)) + 1)
    q = _discretize_cell_masses(tilted.law, step, n_cells)
    conv = q.copy()
    prev_vals = np.ones_like(points)
    total = 0.0
    cum = 0.0
    for term_idx in range(1, max_terms + 1):
        centers = (np.arange(conv.size) + 0.5 * term_idx) * step
        cdf_vals = np.interp(points, centers, np.cumsum(conv), left=0.0)
        term = float(np.dot(weights, np.clip(prev_vals - cdf_vals, 0.0, None)))
        total += lx**term_idx * term
        cum += term
        if lx ** (term_idx + 1) * max(0.0, 1.0 - cum) < tol:
            return total
        prev_vals = cdf_vals
        conv = scipy.signal.convolve(conv, q)[:n_cells]
        np.clip(conv, 0.0, None, out=conv)
    raise ConvergenceError(
        f"series did not reach tolerance {tol:g} within {max_terms} terms"
    )


def _simulate_stopping(
    x_law: RenewalSpec,
    policy: StoppingPolicy,
    n: int,
    rng,
    max_rounds: int = 10_000_000,
):
    """Vectorized replications of the stopping rules.

    Returns (tau, s_tau, occupied) arrays; `occupied` is the in-cache time
    min(sum of min(X_s, T^R_s), T^Sigma) and is only filled for MinSigmaR.
    """
    tau = np.zeros(n, dtype=np.int64)
    s_tau = np.zeros(n)
    occupied = np.zeros(n) if policy.tag == "MinSigmaR" else None
    alive = np.ones(n, dtype=bool)
    if policy.tag == "Sigma":
        ttl_total = policy.ttl.sample(rng, n)
    elif policy.tag == "MinSigmaR":
        ttl_total = policy.ttl_sigma.sample(rng, n)
    rounds = 0
    while alive.any():
        rounds += 1
        if rounds > max_rounds:
            raise ConvergenceError("stopping-rule simulation exceeded the round cap")
        idx = np.nonzero(alive)[0]
        xs = x_law.sample(rng, idx.size)
        s_tau[idx] += xs
        tau[idx] += 1
        if policy.tag == "R":
            ts = policy.ttl.sample(rng, idx.size)
            stopped = xs > ts
        elif policy.tag == "Sigma":
            stopped = s_tau[idx] > ttl_total[idx]
        else:
            tr = policy.ttl_r.sample(rng, idx.size)
            occupied[idx] += np.minimum(xs, tr)
            stopped = (s_tau[idx] > ttl_total[idx]) | (xs > tr)
        alive[idx[stopped]] = False
    if occupied is not None:
        occupied = np.minimum(occupied, ttl_total)
    return tau, s_tau, occupied


def transform_min(
    x: RenewalSpec,
    t_sigma: RenewalSpec,
    t_r: RenewalSpec,
    omega: float,
    samples: int = 1_000_000,
    rng=None,
) -> MonteCarloValue:
    """Laplace transform of the inter-miss time of a min(Sigma, R) cache.

    All-exponential inputs use the closed form lambda/(lambda+omega) *
    (mu+nu)/(mu+nu+omega) exactly (stderr 0). Otherwise the value
    E-tilde[L_omega(X)^tau] is estimated by Monte Carlo: inter-request
    times are drawn from the tilted law, both TTLs from their original
    laws, and the stopping rule of the min policy is applied literally.
    """
    if omega < 0:
        raise ValidationError("omega must be nonnegative")
    if (
        isinstance(x, Exponential)
        and isinstance(t_sigma, Exponential)
        and isinstance(t_r, Exponential)
    ):
        lam, mu, nu = x.rate, t_sigma.rate, t_r.rate
        value = lam / (lam + omega) * (mu + nu) / (mu + nu + omega)
        return MonteCarloValue(value, 0.0)
    if samples < 10_000:
        raise ValidationError("transform_min needs at least 1e4 samples")
    rng = np.random.default_rng() if rng is None else rng
    tilted = tilt(x, omega)
    policy = StoppingPolicy.min_of(t_sigma, t_r)
    tau, _, _ = _simulate_stopping(tilted.law, policy, samples, rng)
    values = tilted.lx ** tau.astype(np.float64)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return MonteCarloValue(mean, stderr)


def expected_tau(
    x: RenewalSpec,
    policy: StoppingPolicy,
    samples: int = 1_000_000,
    rng=None,
) -> MonteCarloValue:
    """Mean number of requests per miss cycle, E[tau].

    Exact for: any reset-on-request combination (geometric tau with success
    probability P(X > T)); Poisson requests under Sigma (1 + lambda E[T]);
    deterministic requests under Sigma; all-exponential min. Everything
    else runs the literal stopping rules by Monte Carlo (stderr reported).
    """
    tag = policy.tag
    if tag == "R":
        p_miss = 1.0 - _psi(x, policy.ttl, 0.0)
        if p_miss <= 0.0:
            raise DivergentStoppingTimeError(
                "P(X > T) = 0: the TTL structurally never expires before a request"
            )
        return MonteCarloValue(1.0 / p_miss, 0.0)
    if tag == "Sigma":
        t = policy.ttl
        if isinstance(x, Exponential):
            return MonteCarloValue(1.0 + x.rate * t.mean, 0.0)
        if isinstance(x, Deterministic):
            total = 1.0
            k = 1
            while k < 100_000_000:
                s = float(t.survival_geq(k * x.value))
                total += s
                if s < 1e-15 or k * x.value > t.truncation_point(1e-15):
                    return MonteCarloValue(total, 0.0)
                k += 1
            raise ConvergenceError("survival series did not converge")
    elif tag == "MinSigmaR":
        if (
            isinstance(x, Exponential)
            and isinstance(policy.ttl_sigma, Exponential)
            and isinstance(policy.ttl_r, Exponential)
        ):
            lam = x.rate
            return MonteCarloValue(
                1.0 + lam / (policy.ttl_sigma.rate + policy.ttl_r.rate), 0.0
            )
    rng = np.random.default_rng() if rng is None else rng
    tau, _, _ = _simulate_stopping(x, policy, samples, rng)
    mean = float(tau.mean())
    stderr = float(tau.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return MonteCarloValue(mean, stderr)


def hit_miss_renewal(
    x: RenewalSpec,
    policy: StoppingPolicy,
    samples: int = 1_000_000,
    rng=None,
) -> RenewalHitMiss:
    """Hit and miss probabilities: M = 1 / E[tau], H = 1 - M."""
    est = expected_tau(x, policy, samples, rng)
    miss = 1.0 / est.value
    stderr = None if est.stderr == 0.0 else est.stderr / est.value**2
    return RenewalHitMiss(hit=1.0 - miss, miss=miss, stderr=stderr)


def expected_stopped_sum(
    x: RenewalSpec,
    policy: StoppingPolicy,
    samples: int = 1_000_000,
    rng=None,
) -> float:
    """Mean inter-miss time E[S_tau] = E[tau] E[X] (Wald's identity)."""
    return expected_tau(x, policy, samples, rng).value * x.mean


def _expected_min(x: RenewalSpec, t: RenewalSpec) -> float:
    """E[min(X, T)] for independent X and T."""
    if isinstance(x, Exponential) and isinstance(t, Exponential):
        return 1.0 / (x.rate + t.rate)
    if isinstance(x, Deterministic):
        return t.integral_survival(x.value)
    if isinstance(t, Deterministic):
        return x.integral_survival(t.value)
    if isinstance(x, Tabulated):
        return float(sum(m * t.integral_survival(p) for m, p in zip(x.masses, x.points)))
    if isinstance(t, Tabulated):
        return float(sum(m * x.integral_survival(p) for m, p in zip(t.masses, t.points)))
    upper = min(x.truncation_point(1e-14), t.truncation_point(1e-14))
    value, _ = scipy.integrate.quad(
        lambda u: float(x.survival_geq(u)) * float(t.survival_geq(u)),
        0.0,
        upper,
        limit=200,
    )
    return value


def occupancy_renewal(
    x: RenewalSpec,
    policy: StoppingPolicy,
    samples: int = 1_000_000,
    rng=None,
) -> float:
    """Long-run fraction of time the object is cached.

    R: E[min(X, T)] / E[X]. Sigma: E[T] / E[S_tau]. min(Sigma, R):
    lambda/(lambda+mu+nu) in the all-exponential case, otherwise the ratio
    of mean in-cache time to mean cycle length estimated by simulating the
    stopped sequence (no analytic decoupling is attempted).
    """
    tag = policy.tag
    if tag == "R":
        return _expected_min(x, policy.ttl) / x.mean
    if tag == "Sigma":
        return policy.ttl.mean / expected_stopped_sum(x, policy, samples, rng)
    if (
        isinstance(x, Exponential)
        and isinstance(policy.ttl_sigma, Exponential)
        and isinstance(policy.ttl_r, Exponential)
    ):
        lam = x.rate
        return lam / (lam + policy.ttl_sigma.rate + policy.ttl_r.rate)
    rng = np.random.default_rng() if rng is None else rng
    _, s_tau, occupied = _simulate_stopping(x, policy, samples, rng)
    return float(occupied.mean() / s_tau.mean())


def table1_reference(lam: float, mu: float, nu: float, omega: float) -> dict:
    """Closed-form anchor values for the four canonical single-cache models.

    Rates: lam for exponential requests, mu for the (Sigma or single) TTL,
    nu for the R-component TTL of the min model; deterministic TTLs have
    value 1/mu. Returns {model: {"transform", "expected_stopped_sum",
    "occupancy"}}.
    """
    if min(lam, mu, nu) <= 0:
        raise ValidationError("rates must be positive")
    if omega < 0:
        raise ValidationError("omega must be nonnegative")
    d = 1.0 / mu
    return {
        "M-M-R": {
            "transform": lam / (lam + omega) * mu / (mu + omega),
            "expected_stopped_sum": (lam + mu) / (lam * mu),
            "occupancy": lam / (lam + mu),
        },
        "M-D-R": {
            "transform": lam
            * math.exp(-lam * d)
            / (lam * math.exp(-lam * d) + omega * math.exp(omega * d)),
            "expected_stopped_sum": 1.0 / (lam * math.exp(-lam * d)),
            "occupancy": 1.0 - math.exp(-lam * d),
        },
        "M-D-Sigma": {
            "transform": lam / (lam + omega) * math.exp(-omega * d),
            "expected_stopped_sum": (lam + mu) / (lam * mu),
            "occupancy": lam / (lam + mu),
        },
        "M-M-min": {
            "transform": lam / (lam + omega) * (mu + nu) / (mu + nu + omega),
            "expected_stopped_sum": (lam + mu + nu) / (lam * (mu + nu)),
            "occupancy": lam / (lam + mu + nu),
        },
    }
