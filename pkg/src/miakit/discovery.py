"""Dependency inference from flow activity.

Direct dependencies are observed client-to-service channels.  Indirect
dependencies are inferred where activity on one channel predicts lagged
activity on another through a shared pivot host, scored with normalized
cross-correlation over binned count series.  Retry chains flag the
failover pattern where a client habitually contacts one service and then
immediately another.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable

import numpy as np

from .flows import (
    REGISTERED_PORT_LIMIT,
    Channel,
    ChannelSeries,
    FlowRecord,
    ServiceKey,
    channel_of,
    service_side,
)
from .infrastructure import InfrastructureGraph, build_graph

DEFAULT_NCC_THRESHOLD = 0.8
DEFAULT_MAX_LAG = 30
DEFAULT_MIN_ACTIVITY = 10
DEFAULT_EPISODE_GAP = 2.0
DEFAULT_MIN_SUPPORT = 20
DEFAULT_DOMINANCE = 0.8


class ConstantSeries(Exception):
    pass


class InsufficientOverlap(Exception):
    pass


class MismatchedBinning(Exception):
    pass


class NoValidLag(Exception):
    pass


@dataclass(frozen=True)
class DirectDependency:
    client: str
    service: ServiceKey
    flow_count: int
    first_seen_us: int
    last_seen_us: int

    def channel(self) -> Channel:
        return Channel(self.client, self.service)


@dataclass(frozen=True)
class IndirectDependency:
    upstream: Channel
    downstream: Channel
    lag_s: float
    lag_bins: int
    score: float


@dataclass(frozen=True)
class RetryChain:
    client: str
    first_contact: ServiceKey
    fallback: ServiceKey
    support: int
    episode_gap_s: float


@dataclass
class EvaluationReport:
    precision: float
    recall: float
    true_positives: list
    false_positives: list
    false_negatives: list


def direct_dependencies(
    records: Iterable[FlowRecord],
    registered_port_limit: int = REGISTERED_PORT_LIMIT,
) -> list[DirectDependency]:
    """One entry per distinct (client, service) with counts and time bounds."""
    agg: dict[Channel, list[int]] = {}
    for r in records:
        ch = channel_of(r, registered_port_limit)
        entry = agg.get(ch)
        if entry is None:
            agg[ch] = [1, r.ts_us, r.ts_us]
        else:
            entry[0] += 1
            entry[1] = min(entry[1], r.ts_us)
            entry[2] = max(entry[2], r.ts_us)
    out = [
        DirectDependency(ch.client, ch.service, count, first, last)
        for ch, (count, first, last) in agg.items()
    ]
    out.sort(key=lambda d: (d.client, d.service.label()))
    return out


def _overlap(x: ChannelSeries, y: ChannelSeries, lag: int) -> tuple[np.ndarray, np.ndarray]:
    if x.bin_width != y.bin_width or x.start_us != y.start_us:
        raise MismatchedBinning(
            "series must share bin width and window start "
            f"({x.bin_width}/{x.start_us} vs {y.bin_width}/{y.start_us})"
        )
    if lag < 0:
        ys, xs = _overlap(y, x, -lag)
        return xs, ys
    m = min(len(x.counts), len(y.counts) - lag)
    if m < 2:
        raise InsufficientOverlap(f"overlap of {m} bins at lag {lag}")
    return np.asarray(x.counts[:m], dtype=float), np.asarray(y.counts[lag : lag + m], dtype=float)


def ncc(x: ChannelSeries, y: ChannelSeries, lag: int) -> float:
    """Pearson correlation between x[t] and y[t + lag] over their overlap.

    Means and sample standard deviations are taken over the overlap itself,
    so the score is invariant under positive affine rescaling of either
    series.  Raises :class:`ConstantSeries` when either side has zero
    variance on the overlap.
    """
    xs, ys = _overlap(x, y, lag)
    m = len(xs)
    sx = xs.std(ddof=1)
    sy = ys.std(ddof=1)
    if sx == 0.0 or sy == 0.0:
        raise ConstantSeries(f"zero variance over {m}-bin overlap at lag {lag}")
    r = float(np.dot(xs - xs.mean(), ys - ys.mean()) / ((m - 1) * sx * sy))
    return max(-1.0, min(1.0, r))


def max_lag_ncc(
    x: ChannelSeries, y: ChannelSeries, max_lag: int = DEFAULT_MAX_LAG
) -> tuple[int, float]:
    """(lag, score) maximizing ncc over lags 0..max_lag; smallest lag wins ties.

    Scores within 1e-12 count as tied, so float jitter between overlap
    windows cannot steal a tie from the earlier lag.
    """
    best: tuple[int, float] | None = None
    for lag in range(max_lag + 1):
        try:
            score = ncc(x, y, lag)
        except (ConstantSeries, InsufficientOverlap):
            continue
        if best is None or score > best[1] + 1e-12:
            best = (lag, score)
    if best is None:
        raise NoValidLag(f"no lag in [0, {max_lag}] admits a correlation")
    return best


def infer_indirect(
    direct: Iterable[DirectDependency],
    series_for: Callable[[Channel], ChannelSeries],
    threshold: float = DEFAULT_NCC_THRESHOLD,
    max_lag: int = DEFAULT_MAX_LAG,
    min_activity: int = DEFAULT_MIN_ACTIVITY,
) -> list[IndirectDependency]:
    """Score every channel pair (A->B, B->C) sharing pivot host B.

    B is the service host of the upstream channel and the client of the
    downstream one.  Pairs where either channel is constant are skipped;
    a dependency is emitted when the best lagged score reaches ``threshold``.
    """
    active = [d for d in direct if d.flow_count >= min_activity]
    by_client: dict[str, list[DirectDependency]] = defaultdict(list)
    for d in active:
        by_client[d.client].append(d)

    found: list[IndirectDependency] = []
    for up in active:
        pivot = up.service.host
        for down in by_client.get(pivot, []):
            if down.channel() == up.channel():
                continue
            try:
                xs = series_for(up.channel())
                ys = series_for(down.channel())
                lag, score = max_lag_ncc(xs, ys, max_lag)
            except (ConstantSeries, InsufficientOverlap, NoValidLag):
                continue
            if score >= threshold:
                found.append(
                    IndirectDependency(
                        upstream=up.channel(),
                        downstream=down.channel(),
                        lag_s=lag * xs.bin_width,
                        lag_bins=lag,
                        score=score,
                    )
                )
    found.sort(key=lambda i: (i.upstream.service.host, i.upstream.label(), i.downstream.label()))
    return found


def detect_retry_chains(
    records: Iterable[FlowRecord],
    episode_gap: float = DEFAULT_EPISODE_GAP,
    min_support: int = DEFAULT_MIN_SUPPORT,
    dominance: float = DEFAULT_DOMINANCE,
    registered_port_limit: int = REGISTERED_PORT_LIMIT,
) -> list[RetryChain]:
    """Find habitual contact-then-fallback pairs per client.

    An episode is a flow to service B followed within ``episode_gap`` seconds
    by the same client's next flow to a different service C.  A chain is
    reported when its episode count reaches ``min_support`` and covers at
    least ``dominance`` of all the client's contacts with B.
    """
    gap_us = int(round(episode_gap * 1e6))
    per_client: dict[str, list[tuple[int, ServiceKey]]] = defaultdict(list)
    for r in records:
        client, service, _ = service_side(r, registered_port_limit)
        per_client[client].append((r.ts_us, service))

    chains: list[RetryChain] = []
    for client in sorted(per_client):
        contacts = sorted(per_client[client], key=lambda c: c[0])
        episodes: dict[tuple[ServiceKey, ServiceKey], int] = defaultdict(int)
        totals: dict[ServiceKey, int] = defaultdict(int)
        for i, (ts, svc) in enumerate(contacts):
            totals[svc] += 1
            for ts2, svc2 in contacts[i + 1 :]:
                if ts2 - ts > gap_us:
                    break
                if svc2 != svc:
                    episodes[(svc, svc2)] += 1
                    break
        for (first, fallback), support in sorted(
            episodes.items(), key=lambda kv: (kv[0][0].label(), kv[0][1].label())
        ):
            if support >= min_support and support >= dominance * totals[first]:
                chains.append(RetryChain(client, first, fallback, support, episode_gap))
    return chains


def evaluate(discovered: Iterable[Hashable], ground_truth: Iterable[Hashable]) -> EvaluationReport:
    """Precision/recall of discovered edges against ground truth.

    Edge identity is whatever hashable key the caller supplies (endpoints
    plus kind); 0/0 ratios are defined as 1.
    """
    found = set(discovered)
    truth = set(ground_truth)
    tp = found & truth
    fp = found - truth
    fn = truth - found
    precision = len(tp) / len(found) if found else 1.0
    recall = len(tp) / len(truth) if truth else 1.0
    return EvaluationReport(
        precision=precision,
        recall=recall,
        true_positives=sorted(tp, key=repr),
        false_positives=sorted(fp, key=repr),
        false_negatives=sorted(fn, key=repr),
    )


def direct_key(d: DirectDependency) -> tuple:
    return ("direct", d.client, d.service.label())


def indirect_key(i: IndirectDependency) -> tuple:
    return ("indirect", i.upstream.label(), i.downstream.label())


def retry_key(r: RetryChain) -> tuple:
    return ("retry", r.client, r.first_contact.label(), r.fallback.label())


def export_graph(
    direct: Iterable[DirectDependency],
    indirect: Iterable[IndirectDependency] = (),
    retry_chains: Iterable[RetryChain] = (),
) -> InfrastructureGraph:
    """Turn inference output into an infrastructure graph fragment.

    Hosts become devices, services become service assets tied to their host,
    and every discovered relationship becomes a dependency edge.  Retry
    chains are attached as annotations for operator review: a habitual
    primary-then-fallback pattern usually means a misconfiguration.
    """
    direct = list(direct)
    indirect = list(indirect)
    retry_chains = list(retry_chains)

    clients: set[str] = set()
    services: set[ServiceKey] = set()
    for d in direct:
        clients.add(d.client)
        services.add(d.service)
    for i in indirect:
        for ch in (i.upstream, i.downstream):
            clients.add(ch.client)
            services.add(ch.service)
    for r in retry_chains:
        clients.add(r.client)
        services.add(r.first_contact)
        services.add(r.fallback)

    spec: dict = {"assets": [], "edges": [], "vulnerabilities": []}
    for host in sorted(clients):
        spec["assets"].append({"id": host, "kind": "device", "name": host})
    for svc in sorted(services, key=lambda s: s.label()):
        spec["assets"].append({"id": svc.label(), "kind": "service", "name": svc.label()})

    seen: set[tuple[str, str, str]] = set()
    for d in direct:
        key = (d.client, d.service.label(), "discovered_direct")
        if key not in seen:
            seen.add(key)
            spec["edges"].append(
                {"from": d.client, "to": d.service.label(), "kind": "discovered_direct"}
            )
    for i in indirect:
        key = (i.upstream.service.label(), i.downstream.service.label(), "discovered_indirect")
        if key[0] != key[1] and key not in seen:
            seen.add(key)
            spec["edges"].append(
                {"from": key[0], "to": key[1], "kind": "discovered_indirect"}
            )

    graph = build_graph(spec)
    for r in retry_chains:
        graph.annotations.append(
            {
                "kind": "retry_chain",
                "client": r.client,
                "first_contact": r.first_contact.label(),
                "fallback": r.fallback.label(),
                "support": r.support,
                "note": "client habitually retries against the fallback; review configuration",
            }
        )
    return graph
