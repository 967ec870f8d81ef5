"""Discrete-event oracle for TTL cache networks.

Simulates the literal cache semantics on a topology: leaf requests are
drawn from their arrival MAPs; a request at a node is a hit if the object
is present (R nodes redraw their TTL, min nodes redraw only the R
component) and otherwise a miss that is forwarded towards the origin, with
the object installed with fresh TTLs at every node that missed, all at the
same instant. Evictions fire when a TTL expires; min nodes evict at the
earlier of their two timers. Estimates carry batch-means standard errors
so autocorrelation does not silently shrink the error bars.
"""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .network import AnalysisResult, Topology
from .processes import MapSampler, PhSampler

__all__ = [
    "SimConfig",
    "NodeEstimate",
    "SimEstimate",
    "DiscrepancyRow",
    "DiscrepancyReport",
    "simulate",
    "compare",
]

_N_BATCHES = 100


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    event_cap: int
    warmup: int = -1  # negative: default to 10% of event_cap
    seed: int = 0
    object_id: str | None = None

    @property
    def effective_warmup(self) -> int:
        return self.event_cap // 10 if self.warmup < 0 else self.warmup


@dataclass(frozen=True)
class NodeEstimate:
    requests: int
    hits: int
    misses: int
    hit_ratio: float
    hit_se: float
    miss_ratio: float
    miss_se: float
    occupancy: float
    occupancy_se: float
    miss_rate: float
    miss_rate_se: float
    inter_miss_mean: float
    inter_miss_mean_se: float
    inter_miss_m2: float
    inter_miss_m2_se: float

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class SimEstimate:
    object_id: str
    seed: int
    events: int
    counted_events: int
    duration: float
    nodes: dict  # node id -> NodeEstimate

    def to_dict(self) -> dict:
        return {
            "object": self.object_id,
            "seed": self.seed,
            "events": self.events,
            "counted_events": self.counted_events,
            "duration": self.duration,
            "nodes": {nid: est.to_dict() for nid, est in self.nodes.items()},
        }


def _make_ttl_drawer(spec, rng):
    if spec.kind == "exp":
        scale = 1.0 / spec.rate
        return lambda: rng.exponential(scale)
    if spec.kind == "erlang":
        shape, scale = spec.stages, 1.0 / spec.rate
        return lambda: rng.gamma(shape, scale)
    if spec.kind == "det":
        value = spec.value
        return lambda: value
    sampler = PhSampler(spec.to_ph())
    return lambda: sampler.sample(rng)


def _batch_se(values) -> float:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size < 2:
        return math.nan
    return float(values.std(ddof=1) / math.sqrt(values.size))


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def simulate(cfg: SimConfig) -> SimEstimate:
    """Run one seeded simulation and return per-node empirical metrics.

    Events are processed from a queue keyed by (time, insertion sequence);
    the tiebreak makes runs reproducible bit-for-bit for a fixed seed.
    `event_cap` counts leaf request events; the first `warmup` of them are
    excluded from every estimate.
    """
    warmup = cfg.effective_warmup
    if warmup < 0:
        raise ValidationError("warmup must be nonnegative")
    if cfg.event_cap <= warmup:
        raise ValidationError("event_cap must exceed warmup")
    topo = cfg.topology
    obj = topo.objects[0] if cfg.object_id is None else topo.object_by_id(cfg.object_id)
    rng = np.random.default_rng(cfg.seed)
    node_ids = topo.node_order
    index = {nid: i for i, nid in enumerate(node_ids)}
    n_nodes = len(node_ids)
    n_post = cfg.event_cap - warmup
    n_batches = min(_N_BATCHES, n_post)

    policies = []
    draw_main = []
    draw_r = []
    parent_idx = []
    split_cum = []
    for nid in node_ids:
        node = topo.nodes[nid]
        policies.append({"R": 0, "Sigma": 1, "MinSigmaR": 2}[node.policy])
        draw_main.append(_make_ttl_drawer(node.ttl, rng))
        draw_r.append(_make_ttl_drawer(node.ttl_r, rng) if node.ttl_r else None)
        parent_idx.append([index[p] for p in topo.parents_of(nid)])
        split_cum.append(
            node.split.entries.cumsum().tolist() if node.split is not None else None
        )

    leaf_ids = topo.leaves
    leaf_node = [index[leaf] for leaf in leaf_ids]
    samplers = [
        MapSampler(topo.arrival_for(obj, leaf).to_map(), rng) for leaf in leaf_ids
    ]

    present = [False] * n_nodes
    version = [0] * n_nodes
    sig_exp = [math.inf] * n_nodes
    r_exp = [math.inf] * n_nodes
    last_update = [0.0] * n_nodes
    last_miss = [math.nan] * n_nodes

    def zeros():
        return [[0.0] * n_batches for _ in range(n_nodes)]

    b_req, b_hit, b_miss = zeros(), zeros(), zeros()
    b_occ = zeros()
    b_im_count, b_im_sum, b_im_sumsq = zeros(), zeros(), zeros()
    b_dur = [0.0] * n_batches

    heap: list = []
    push = heapq.heappush
    pop = heapq.heappop
    seq = 0
    for slot, sampler in enumerate(samplers):
        push(heap, (sampler.next_event(), seq, 0, slot))
        seq += 1

    processed = 0
    counting = False
    batch = 0
    batch_start = 0.0
    stats_start = 0.0
    now = 0.0
    rand = rng.random
    while processed < cfg.event_cap:
        now, _, kind, payload = pop(heap)
        if kind == 1:  # eviction
            i, ver = payload
            if ver == version[i] and present[i]:
                if counting:
                    b_occ[i][batch] += now - last_update[i]
                present[i] = False
                last_update[i] = now
            continue

        slot = payload
        if processed == warmup:
            counting = True
            stats_start = now
            batch_start = now
            for i in range(n_nodes):
                last_update[i] = now
        if counting:
            new_batch = (processed - warmup) * n_batches // n_post
            if new_batch != batch:
                for i in range(n_nodes):
                    if present[i]:
                        b_occ[i][batch] += now - last_update[i]
                    last_update[i] = now
                b_dur[batch] = now - batch_start
                batch_start = now
                batch = new_batch
        processed += 1
        push(heap, (samplers[slot].next_event(), seq, 0, slot))
        seq += 1

        # walk the request towards the origin
        current = leaf_node[slot]
        path = []
        while True:
            if counting:
                b_req[current][batch] += 1.0
            if present[current]:
                if counting:
                    b_hit[current][batch] += 1.0
                pol = policies[current]
                if pol == 0:  # R: hit redraws the TTL
                    version[current] += 1
                    push(heap, (now + draw_main[current](), seq, 1, (current, version[current])))
                    seq += 1
                elif pol == 2:  # min: hit redraws only the R timer
                    r_exp[current] = now + draw_r[current]()
                    version[current] += 1
                    push(
                        heap,
                        (min(sig_exp[current], r_exp[current]), seq, 1, (current, version[current])),
                    )
                    seq += 1
                break
            if counting:
                b_miss[current][batch] += 1.0
                lm = last_miss[current]
                if lm == lm:  # not NaN
                    dt = now - lm
                    b_im_count[current][batch] += 1.0
                    b_im_sum[current][batch] += dt
                    b_im_sumsq[current][batch] += dt * dt
            last_miss[current] = now
            path.append(current)
            ps = parent_idx[current]
            if not ps:
                break  # origin always holds the object
            if len(ps) == 1:
                current = ps[0]
            else:
                u = rand()
                cum = split_cum[current]
                k = 0
                while k < len(cum) - 1 and u > cum[k]:
                    k += 1
                current = ps[k]

        # install the object at every node that missed, at this instant
        for i in path:
            present[i] = True
            last_update[i] = now
            version[i] += 1
            if policies[i] == 2:
                sig_exp[i] = now + draw_main[i]()
                r_exp[i] = now + draw_r[i]()
                evict_at = min(sig_exp[i], r_exp[i])
            else:
                evict_at = now + draw_main[i]()
            push(heap, (evict_at, seq, 1, (i, version[i])))
            seq += 1

    # close the measurement window at the last processed request
    for i in range(n_nodes):
        if present[i]:
            b_occ[i][batch] += now - last_update[i]
            last_update[i] = now
    b_dur[batch] = now - batch_start
    duration = now - stats_start

    nodes = {}
    durs = np.array(b_dur)
    for nid, i in index.items():
        req = np.array(b_req[i])
        hit = np.array(b_hit[i])
        mis = np.array(b_miss[i])
        occ = np.array(b_occ[i])
        imc = np.array(b_im_count[i])
        ims = np.array(b_im_sum[i])
        imq = np.array(b_im_sumsq[i])
        total_req = int(req.sum())
        total_hit = int(hit.sum())
        total_miss = int(mis.sum())
        with np.errstate(invalid="ignore", divide="ignore"):
            hit_b = np.where(req > 0, hit / req, np.nan)
            occ_b = np.where(durs > 0, occ / durs, np.nan)
            rate_b = np.where(durs > 0, mis / durs, np.nan)
            im_mean_b = np.where(imc > 0, ims / imc, np.nan)
            im_m2_b = np.where(imc > 0, imq / imc, np.nan)
        hit_se = _batch_se(hit_b)
        nodes[nid] = NodeEstimate(
            requests=total_req,
            hits=total_hit,
            misses=total_miss,
            hit_ratio=_ratio(total_hit, total_req),
            hit_se=hit_se,
            miss_ratio=_ratio(total_miss, total_req),
            miss_se=hit_se,
            occupancy=_ratio(float(occ.sum()), duration),
            occupancy_se=_batch_se(occ_b),
            miss_rate=_ratio(total_miss, duration),
            miss_rate_se=_batch_se(rate_b),
            inter_miss_mean=_ratio(float(ims.sum()), float(imc.sum())),
            inter_miss_mean_se=_batch_se(im_mean_b),
            inter_miss_m2=_ratio(float(imq.sum()), float(imc.sum())),
            inter_miss_m2_se=_batch_se(im_m2_b),
        )
    return SimEstimate(
        object_id=obj.id,
        seed=cfg.seed,
        events=cfg.event_cap,
        counted_events=n_post,
        duration=duration,
        nodes=nodes,
    )


@dataclass(frozen=True)
class DiscrepancyRow:
    node: str
    metric: str
    analytic: float
    empirical: float
    stderr: float
    z_score: float
    flagged: bool

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class DiscrepancyReport:
    k_sigma: float
    rows: tuple

    @property
    def flagged(self) -> list:
        return [row for row in self.rows if row.flagged]

    @property
    def ok(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        return {
            "k_sigma": self.k_sigma,
            "flagged_count": len(self.flagged),
            "rows": [row.to_dict() for row in self.rows],
        }


def compare(
    analytic: AnalysisResult, empirical: SimEstimate, k_sigma: float = 4.0
) -> DiscrepancyReport:
    """Per-node, per-metric |analytic - empirical| / stderr discrepancy table.

    Rows whose z-score exceeds `k_sigma` (or whose standard error is
    undefined while the values differ) are flagged.
    """
    if set(analytic.metrics) != set(empirical.nodes):
        raise ValidationError(
            f"mismatched node sets: {sorted(analytic.metrics)} vs {sorted(empirical.nodes)}"
        )
    rows = []
    for nid, exact in analytic.metrics.items():
        est = empirical.nodes[nid]
        pairs = [
            ("hit", exact.hit_probability, est.hit_ratio, est.hit_se),
            ("miss", exact.miss_probability, est.miss_ratio, est.miss_se),
            ("occupancy", exact.occupancy, est.occupancy, est.occupancy_se),
            ("miss_rate", exact.miss_rate, est.miss_rate, est.miss_rate_se),
        ]
        for metric, a, e, se in pairs:
            gap = abs(a - e)
            if se and math.isfinite(se) and se > 0:
                z = gap / se
            else:
                z = 0.0 if gap == 0.0 else math.inf
            rows.append(
                DiscrepancyRow(
                    node=nid,
                    metric=metric,
                    analytic=a,
                    empirical=e,
                    stderr=se,
                    z_score=z,
                    flagged=bool(z > k_sigma),
                )
            )
    return DiscrepancyReport(k_sigma=k_sigma, rows=tuple(rows))
