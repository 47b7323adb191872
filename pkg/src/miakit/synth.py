"""Seeded synthetic flow generation with planted ground truth.

A topology document names client-to-service channels (independent Poisson
traffic), cascades (each upstream request triggers a downstream request
after a fixed lag, optionally jittered or dropped), and retry chains (a
client that always contacts a primary service and then its fallback).  The
generator emits a flow list plus the matching ground-truth edges, so
discovery output can be scored with precision and recall.
"""

from __future__ import annotations

from typing import Any

import numpy as np
import yaml

from .flows import Channel, FlowRecord, ServiceKey, parse_service

SCHEMA_VERSION = 1


def load_topology(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: topology document must be a mapping")
    return doc


def _emit(
    out: list[FlowRecord],
    rng: np.random.Generator,
    t_s: float,
    client: str,
    service: ServiceKey,
) -> None:
    out.append(
        FlowRecord(
            ts_us=int(round(t_s * 1e6)),
            src_host=client,
            src_port=int(rng.integers(49152, 65536)),
            dst_host=service.host,
            dst_port=service.port,
            proto=service.proto,
            bytes=int(rng.integers(200, 1500)),
            packets=int(rng.integers(1, 10)),
        )
    )


def _poisson_times(rng: np.random.Generator, rate_per_s: float, duration_s: float) -> list[float]:
    times = []
    t = rng.exponential(1.0 / rate_per_s) if rate_per_s > 0 else duration_s
    while t < duration_s:
        times.append(t)
        t += rng.exponential(1.0 / rate_per_s)
    return times


def gen_flows(
    topology: dict, duration_s: float | None = None, seed: int = 0
) -> tuple[list[FlowRecord], dict]:
    """Generate flows for ``topology`` over ``duration_s`` seconds.

    Returns (records sorted by timestamp, ground-truth document).
    """
    rng = np.random.default_rng(int(seed))
    if duration_s is None:
        duration_s = float(topology.get("duration_s", 600.0))
    bin_width = float(topology.get("bin_width", 1.0))

    records: list[FlowRecord] = []
    truth: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "seed": int(seed),
        "duration_s": duration_s,
        "bin_width": bin_width,
        "direct": [],
        "indirect": [],
        "retry_chains": [],
    }

    def direct_truth(client: str, service: ServiceKey) -> None:
        entry = {"client": client, "service": service.label()}
        if entry not in truth["direct"]:
            truth["direct"].append(entry)

    for entry in topology.get("channels", []) or []:
        client = str(entry["client"])
        service = parse_service(str(entry["service"]))
        rate = float(entry["rate_per_s"])
        times = _poisson_times(rng, rate, duration_s)
        for t in times:
            _emit(records, rng, t, client, service)
        if times:
            direct_truth(client, service)

    for entry in topology.get("cascades", []) or []:
        up = entry["upstream"]
        client = str(up["client"])
        service = parse_service(str(up["service"]))
        rate = float(up["rate_per_s"])
        down_service = parse_service(str(entry["downstream_service"]))
        pivot = service.host
        lag = float(entry["lag_s"])
        jitter = float(entry.get("jitter_s", 0.0))
        drop = float(entry.get("drop_prob", 0.0))
        up_times = _poisson_times(rng, rate, duration_s)
        emitted_down = False
        for t in up_times:
            _emit(records, rng, t, client, service)
            if drop > 0 and rng.random() < drop:
                continue
            resp = t + lag + (rng.uniform(-jitter, jitter) if jitter > 0 else 0.0)
            if 0 <= resp < duration_s:
                _emit(records, rng, resp, pivot, down_service)
                emitted_down = True
        if up_times:
            direct_truth(client, service)
        if emitted_down:
            direct_truth(pivot, down_service)
            truth["indirect"].append(
                {
                    "upstream": {"client": client, "service": service.label()},
                    "downstream": {"client": pivot, "service": down_service.label()},
                    "lag_bins": int(round(lag / bin_width)),
                }
            )

    for entry in topology.get("retries", []) or []:
        client = str(entry["client"])
        primary = parse_service(str(entry["primary"]))
        fallback = parse_service(str(entry["fallback"]))
        rate = float(entry["rate_per_s"])
        gap = float(entry.get("gap_s", 0.5))
        times = _poisson_times(rng, rate, duration_s)
        for t in times:
            _emit(records, rng, t, client, primary)
            retry_t = t + gap
            if retry_t < duration_s:
                _emit(records, rng, retry_t, client, fallback)
        if times:
            direct_truth(client, primary)
            direct_truth(client, fallback)
            truth["retry_chains"].append(
                {
                    "client": client,
                    "first_contact": primary.label(),
                    "fallback": fallback.label(),
                }
            )

    records.sort(key=lambda r: (r.ts_us, r.src_host, r.dst_host, r.src_port))
    return records, truth


# -- ground-truth edge keys, matching the discovery key helpers ---------------


def truth_direct_keys(truth: dict) -> set:
    return {("direct", d["client"], d["service"]) for d in truth.get("direct", [])}


def truth_indirect_keys(truth: dict) -> set:
    keys = set()
    for entry in truth.get("indirect", []):
        up = Channel(entry["upstream"]["client"], parse_service(entry["upstream"]["service"]))
        down = Channel(
            entry["downstream"]["client"], parse_service(entry["downstream"]["service"])
        )
        keys.add(("indirect", up.label(), down.label()))
    return keys


def truth_retry_keys(truth: dict) -> set:
    return {
        ("retry", r["client"], r["first_contact"], r["fallback"])
        for r in truth.get("retry_chains", [])
    }


def save_truth(truth: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(truth, fh, sort_keys=False)


def load_truth(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh)
