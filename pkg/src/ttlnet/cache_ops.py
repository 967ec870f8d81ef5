"""Input-output closure operators for TTL caches with MAP requests and PH TTLs.

Each operator builds the miss process of a cache as a new MAP whose state
space is the Cartesian product of the TTL phase space (absorbing phase
first) and the request states. Block index = TTL phase, so the first n
states form the OUT group (object absent) and the remaining blocks the IN
group (object present, one block per transient TTL phase). Active
transitions originate only from OUT states: a request seen while the
object is absent is a miss, installs the object, and restarts the TTL
according to its initial vector; requests seen while the object is present
are hits and stay hidden.
"""

from dataclasses import dataclass

import numpy as np

from .kron import RateMatrix, kron_product, kron_sum
from .processes import (
    MarkovArrivalProcess,
    PhaseTypeDistribution,
    ph_min,
    require_valid,
)

__all__ = ["CacheOutput", "output_sigma", "output_r", "output_min"]


@dataclass(frozen=True)
class CacheOutput:
    """Miss-process MAP of a cache plus its IN/OUT state partition."""

    map: MarkovArrivalProcess
    in_states: frozenset[int]
    out_states: frozenset[int]

    @property
    def order(self) -> int:
        return self.map.order


def _partition(n: int, total: int) -> tuple[frozenset[int], frozenset[int]]:
    return frozenset(range(n, total)), frozenset(range(n))


def _block_labels(m: MarkovArrivalProcess, phases: int) -> tuple[str, ...] | None:
    if m.state_labels is None:
        return None
    prefixes = ["out"] + [f"in{k}" for k in range(1, phases + 1)]
    return tuple(f"{p}:{s}" for p in prefixes for s in m.state_labels)


def _active_block_row(pi: np.ndarray, n_phases: int) -> RateMatrix:
    """Template with row 0 = (0, pi_1, ..., pi_m): misses restart the TTL."""
    triplets = [(0, j + 1, float(w)) for j, w in enumerate(pi) if w != 0.0]
    return RateMatrix.from_triplets(n_phases, n_phases, triplets)


def output_sigma(m: MarkovArrivalProcess, t: PhaseTypeDistribution) -> CacheOutput:
    """Miss process of a reset-on-miss (Sigma) cache.

    Parameters
    ----------
    m : MarkovArrivalProcess
        Request process with n states.
    t : PhaseTypeDistribution
        TTL with m transient phases; requests and TTL independent.

    Returns
    -------
    CacheOutput
        MAP of dimension n(m+1). Hidden matrix: (P (+) d0) plus a copy of d1
        on every IN diagonal block (in-cache requests are hits that leave the
        TTL phase untouched). Active matrix: top block row (0, pi_1 d1, ...,
        pi_m d1).
    """
    require_valid(m)
    phases = t.order + 1
    full = t.full_generator()
    base = kron_sum(full, m.d0)
    in_diag = RateMatrix.from_triplets(
        phases, phases, [(k, k, 1.0) for k in range(1, phases)]
    )
    d0p = base + kron_product(in_diag, m.d1)
    d1p = kron_product(_active_block_row(t.pi.entries, phases), m.d1)
    out = MarkovArrivalProcess(d0p, d1p, _block_labels(m, t.order))
    in_states, out_states = _partition(m.order, out.order)
    return CacheOutput(out, in_states, out_states)


def output_r(m: MarkovArrivalProcess, t: PhaseTypeDistribution) -> CacheOutput:
    """Miss process of a reset-on-request (R) cache.

    Same layout as :func:`output_sigma`, but a hit also restarts the TTL:
    every IN block row of the hidden correction carries (pi_1 d1, ...,
    pi_m d1) instead of keeping the phase fixed.
    """
    require_valid(m)
    phases = t.order + 1
    full = t.full_generator()
    base = kron_sum(full, m.d0)
    reset = RateMatrix.from_triplets(
        phases,
        phases,
        [
            (i, j + 1, float(w))
            for i in range(1, phases)
            for j, w in enumerate(t.pi.entries)
            if w != 0.0
        ],
    )
    d0p = base + kron_product(reset, m.d1)
    d1p = kron_product(_active_block_row(t.pi.entries, phases), m.d1)
    out = MarkovArrivalProcess(d0p, d1p, _block_labels(m, t.order))
    in_states, out_states = _partition(m.order, out.order)
    return CacheOutput(out, in_states, out_states)


def output_min(
    m: MarkovArrivalProcess,
    t_sigma: PhaseTypeDistribution,
    t_r: PhaseTypeDistribution,
) -> CacheOutput:
    """Miss process of a min(Sigma, R) cache holding two parallel TTLs.

    The joint TTL is min(t_sigma, t_r) with the Sigma phases outermost; that
    argument order cannot be swapped without scrambling the reset blocks.
    Hits restart only the R component, so the hidden correction is block
    diagonal over Sigma phases, each q*q block repeating the row
    (pi^R_1 d1, ..., pi^R_q d1). Dimension n(m*q + 1).
    """
    require_valid(m)
    joint = ph_min(t_sigma, t_r)
    n_sigma, n_r = t_sigma.order, t_r.order
    phases = joint.order + 1
    base = kron_sum(joint.full_generator(), m.d0)
    pi_r = t_r.pi.entries
    triplets = []
    for i in range(n_sigma):
        for r_from in range(n_r):
            row = 1 + i * n_r + r_from
            for r_to, w in enumerate(pi_r):
                if w != 0.0:
                    triplets.append((row, 1 + i * n_r + r_to, float(w)))
    reset = RateMatrix.from_triplets(phases, phases, triplets)
    d0p = base + kron_product(reset, m.d1)
    d1p = kron_product(_active_block_row(joint.pi.entries, phases), m.d1)
    out = MarkovArrivalProcess(d0p, d1p, _block_labels(m, joint.order))
    in_states, out_states = _partition(m.order, out.order)
    return CacheOutput(out, in_states, out_states)
