"""Scenario documents: loading, validation, and replication execution.

A scenario is one YAML document with ``infrastructure``, ``mission``,
optional ``attacker``/``defender`` sections and a ``sim`` block.  Durations
may be given as seconds or with s/m/h/d/w suffixes; all defaults are filled
in at load time and echoed back out, so a saved scenario reloads to exactly
the same object.  ``Scenario.run_replication`` wires the four models onto
one kernel for a single seeded run.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from typing import Any

import yaml

from . import metrics as metrics_mod
from .infrastructure import InfrastructureGraph, build_graph
from .kernel import Distribution, Simulator, StreamFactory
from .mission import MissionResult, MissionRuntime, MissionSpec, TaskSpec, validate_mission
from .threat import (
    AttackerRuntime,
    AttackerSpec,
    AttackTimeline,
    DefenderSpec,
    EffectSpec,
    StartPolicy,
    attacker_process,
    defender_process,
)

SCHEMA_VERSION = 1

_SUFFIXES = {"s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0, "w": 604800.0}


class ParseError(Exception):
    def __init__(self, location: str, reason: str):
        super().__init__(f"{location}: {reason}")
        self.location = location
        self.reason = reason


class ValidationError(Exception):
    def __init__(self, fieldname: str, reason: str):
        super().__init__(f"{fieldname}: {reason}")
        self.field = fieldname
        self.reason = reason


def parse_duration(value: Any, fieldname: str = "duration") -> float:
    """Seconds from a number or a suffixed string like ``90``, ``15m``, ``2h``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        suffix = text[-1:].lower()
        if suffix in _SUFFIXES:
            try:
                return float(text[:-1]) * _SUFFIXES[suffix]
            except ValueError:
                pass
        try:
            return float(text)
        except ValueError:
            pass
    raise ValidationError(fieldname, f"cannot read duration from {value!r}")


def parse_distribution(value: Any, fieldname: str = "distribution") -> Distribution:
    """Distribution from its document form.

    ``{fixed: X}``, ``{uniform: [a, b]}``, ``{exponential: M}`` (or
    ``{exponential: {mean: M}}``), ``{triangular: [lo, mode, hi]}``; bare
    numbers are shorthand for fixed.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Distribution.fixed(float(value))
    if isinstance(value, str):
        return Distribution.fixed(parse_duration(value, fieldname))
    if not isinstance(value, dict) or len(value) != 1:
        raise ValidationError(fieldname, f"expected one-key distribution map, got {value!r}")
    kind, params = next(iter(value.items()))
    try:
        if kind == "fixed":
            return Distribution.fixed(parse_duration(params, fieldname))
        if kind == "uniform":
            a, b = params
            return Distribution.uniform(parse_duration(a, fieldname), parse_duration(b, fieldname))
        if kind == "exponential":
            if isinstance(params, dict):
                params = params["mean"]
            return Distribution.exponential(parse_duration(params, fieldname))
        if kind == "triangular":
            a, m, b = params
            return Distribution.triangular(
                parse_duration(a, fieldname),
                parse_duration(m, fieldname),
                parse_duration(b, fieldname),
            )
    except (TypeError, KeyError) as exc:
        raise ValidationError(fieldname, f"bad {kind} parameters {params!r}") from None
    raise ValidationError(fieldname, f"unknown distribution kind {kind!r}")


def _dist_doc(dist: Distribution) -> dict:
    if dist.kind in ("fixed", "exponential"):
        return {dist.kind: dist.params[0]}
    return {dist.kind: list(dist.params)}


def parse_effect(value: Any) -> EffectSpec:
    if value == "integrity":
        return EffectSpec("integrity")
    if value == "confidentiality":
        return EffectSpec("confidentiality")
    if isinstance(value, dict) and set(value) == {"availability"}:
        inner = value["availability"]
        if inner == "stop":
            return EffectSpec("availability_stop")
        if isinstance(inner, dict) and set(inner) == {"degrade"}:
            return EffectSpec("availability_degrade", degrade_factor=float(inner["degrade"]))
    raise ValidationError("attacker.effect", f"cannot read effect {value!r}")


def _effect_doc(effect: EffectSpec) -> Any:
    if effect.kind == "integrity":
        return "integrity"
    if effect.kind == "confidentiality":
        return "confidentiality"
    if effect.kind == "availability_stop":
        return {"availability": "stop"}
    return {"availability": {"degrade": effect.degrade_factor}}


def parse_start(value: Any) -> StartPolicy:
    if isinstance(value, dict) and len(value) == 1:
        kind, param = next(iter(value.items()))
        if kind == "fixed":
            return StartPolicy.fixed(parse_duration(param, "attacker.start"))
        if kind == "random":
            return StartPolicy.random(parse_duration(param, "attacker.start"))
        if kind == "task":
            return StartPolicy.process_triggered(str(param))
    raise ValidationError("attacker.start", f"cannot read start policy {value!r}")


def _start_doc(policy: StartPolicy) -> dict:
    if policy.kind == "fixed":
        return {"fixed": policy.at}
    if policy.kind == "random":
        return {"random": policy.window}
    return {"task": policy.task}


@dataclass
class Scenario:
    infrastructure: dict
    mission: MissionSpec
    attacker: AttackerSpec | None
    defender: DefenderSpec | None
    replications: int
    base_seed: int
    horizon: float
    source: str = ""

    def build_graph(self) -> InfrastructureGraph:
        return build_graph(self.infrastructure)

    def without_attack(self) -> "Scenario":
        return dataclasses.replace(self, attacker=None, defender=None)

    def mission_bindings(self) -> dict:
        return {t.id: list(t.required_assets) for t in self.mission.tasks}

    # -- execution ----------------------------------------------------------

    def run_detailed(
        self, replication: int, base_seed: int, record_trace: bool = False
    ) -> tuple[metrics_mod.MissionMetrics, MissionResult, AttackTimeline | None, list]:
        graph = self.build_graph()
        sim = Simulator(record_trace=record_trace)
        streams = StreamFactory(base_seed, replication)
        mission_rt = MissionRuntime(self.mission, graph, sim, streams).install()
        attacker_rt: AttackerRuntime | None = None
        if self.attacker is not None:
            attacker_rt = attacker_process(
                self.attacker,
                graph,
                sim,
                streams.stream(StreamFactory.ATTACKER),
                mission=mission_rt,
            )
            if self.defender is not None:
                defender_process(
                    self.defender,
                    sim,
                    streams.stream(StreamFactory.DEFENDER),
                    attacker_rt,
                    mission=mission_rt,
                )
        trace = sim.run_until(self.horizon)
        result = mission_rt.finalize()
        timeline = None
        if attacker_rt is not None:
            attacker_rt.timeline.horizon = self.horizon
            timeline = attacker_rt.timeline
        return metrics_mod.collect(result, timeline), result, timeline, trace

    def run_replication(self, replication: int, base_seed: int) -> metrics_mod.MissionMetrics:
        return self.run_detailed(replication, base_seed)[0]


def _require(doc: dict, key: str, location: str) -> Any:
    if key not in doc:
        raise ValidationError(f"{location}.{key}", "missing required field")
    return doc[key]


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ParseError(path, "no such file") from None
    except yaml.YAMLError as exc:
        raise ParseError(path, f"YAML error: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(path, "scenario document must be a mapping")
    return scenario_from_dict(doc, source=path)


def scenario_from_dict(doc: dict, source: str = "") -> Scenario:
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"unsupported version {version!r}")

    infra = doc.get("infrastructure") or {}
    try:
        graph = build_graph(infra)
    except Exception as exc:
        raise ValidationError("infrastructure", str(exc)) from None

    sim_doc = doc.get("sim") or {}
    horizon = parse_duration(sim_doc.get("horizon", "1d"), "sim.horizon")
    replications = int(sim_doc.get("replications", 1))
    base_seed = int(sim_doc.get("base_seed", 0))
    if replications < 1:
        raise ValidationError("sim.replications", "must be >= 1")

    mission_doc = _require(doc, "mission", "scenario")
    tasks = []
    for i, tdoc in enumerate(mission_doc.get("tasks", []) or []):
        loc = f"mission.tasks[{i}]"
        task_id = str(_require(tdoc, "id", loc))
        tasks.append(
            TaskSpec(
                id=task_id,
                duration=parse_distribution(_require(tdoc, "duration", loc), f"{loc}.duration"),
                role=str(_require(tdoc, "role", loc)),
                required_assets=tuple(str(a) for a in (tdoc.get("requires") or [])),
                predecessors=tuple(str(p) for p in (tdoc.get("after") or [])),
                rework_duration=parse_distribution(
                    tdoc.get("rework", 0.0), f"{loc}.rework"
                ),
            )
        )
    mission = MissionSpec(
        tasks=tuple(tasks),
        arrivals=parse_distribution(_require(mission_doc, "arrivals", "mission"), "mission.arrivals"),
        personnel={str(r): int(n) for r, n in (mission_doc.get("personnel") or {}).items()},
        day_length=parse_duration(mission_doc.get("day_length", "1d"), "mission.day_length"),
        horizon=horizon,
        checkpoints=tuple(
            parse_duration(c, "mission.checkpoints") for c in (mission_doc.get("checkpoints") or [])
        ),
        deadline_per_item=(
            parse_duration(mission_doc["deadline_per_item"], "mission.deadline_per_item")
            if mission_doc.get("deadline_per_item") is not None
            else None
        ),
        arrival_cutoff=(
            parse_duration(mission_doc["arrival_cutoff"], "mission.arrival_cutoff")
            if mission_doc.get("arrival_cutoff") is not None
            else None
        ),
    )
    for task in mission.tasks:
        for asset in task.required_assets:
            if asset not in graph.assets:
                raise ValidationError(
                    f"mission.tasks[{task.id}].requires",
                    f"task {task.id!r} bound to unknown asset {asset!r}",
                )
    try:
        mission = validate_mission(mission, graph)
    except Exception as exc:
        raise ValidationError("mission", str(exc)) from None

    attacker = None
    defender = None
    if doc.get("attacker") is not None:
        adoc = doc["attacker"]
        target = str(_require(adoc, "target", "attacker"))
        if target not in graph.assets:
            raise ValidationError("attacker.target", f"unknown asset {target!r}")
        if not graph.end_user_nodes():
            raise ValidationError(
                "infrastructure.assets", "attacker needs at least one end_user_node"
            )
        attacker = AttackerSpec(
            target=target,
            effect=parse_effect(_require(adoc, "effect", "attacker")),
            start=parse_start(_require(adoc, "start", "attacker")),
            capabilities=frozenset(str(c) for c in (adoc.get("capabilities") or [])),
            spearphish_success_prob=float(adoc.get("spearphish_success_prob", 1.0)),
            spearphish_interval=parse_distribution(
                adoc.get("spearphish_interval", 60.0), "attacker.spearphish_interval"
            ),
            scan_interval=parse_distribution(
                adoc.get("scan_interval", 60.0), "attacker.scan_interval"
            ),
            proficiency=float(adoc.get("proficiency", 1.0)),
            agility=float(adoc.get("agility", 1.0)),
        )
        if "defender" not in doc:
            raise ValidationError(
                "defender", "scenario has an attacker; give a defender or an explicit null"
            )
        if doc["defender"] is not None:
            ddoc = doc["defender"]
            defender = DefenderSpec(
                detect_delay=parse_distribution(
                    ddoc.get("detect_delay", 3600.0), "defender.detect_delay"
                ),
                forensics_duration=parse_distribution(
                    ddoc.get("forensics_duration", 1800.0), "defender.forensics_duration"
                ),
                per_host_discovery_prob=float(ddoc.get("per_host_discovery_prob", 1.0)),
                remediation_per_host=parse_distribution(
                    ddoc.get("remediation_per_host", 1800.0), "defender.remediation_per_host"
                ),
            )

    return Scenario(
        infrastructure={
            "assets": list(infra.get("assets", []) or []),
            "edges": list(infra.get("edges", []) or []),
            "vulnerabilities": list(infra.get("vulnerabilities", []) or []),
        },
        mission=mission,
        attacker=attacker,
        defender=defender,
        replications=replications,
        base_seed=base_seed,
        horizon=horizon,
        source=source,
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Full document form with every default echoed."""
    mission = scenario.mission
    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "infrastructure": scenario.infrastructure,
        "mission": {
            "day_length": mission.day_length,
            "checkpoints": list(mission.checkpoints),
            "arrivals": _dist_doc(mission.arrivals),
            "personnel": dict(mission.personnel),
            "deadline_per_item": mission.deadline_per_item,
            "arrival_cutoff": mission.arrival_cutoff,
            "tasks": [
                {
                    "id": t.id,
                    "role": t.role,
                    "duration": _dist_doc(t.duration),
                    "rework": _dist_doc(t.rework_duration),
                    "requires": list(t.required_assets),
                    "after": list(t.predecessors),
                }
                for t in mission.tasks
            ],
        },
        "sim": {
            "replications": scenario.replications,
            "base_seed": scenario.base_seed,
            "horizon": scenario.horizon,
        },
    }
    if scenario.attacker is not None:
        a = scenario.attacker
        doc["attacker"] = {
            "target": a.target,
            "effect": _effect_doc(a.effect),
            "start": _start_doc(a.start),
            "capabilities": sorted(a.capabilities),
            "spearphish_success_prob": a.spearphish_success_prob,
            "spearphish_interval": _dist_doc(a.spearphish_interval),
            "scan_interval": _dist_doc(a.scan_interval),
            "proficiency": a.proficiency,
            "agility": a.agility,
        }
        if scenario.defender is not None:
            d = scenario.defender
            doc["defender"] = {
                "detect_delay": _dist_doc(d.detect_delay),
                "forensics_duration": _dist_doc(d.forensics_duration),
                "per_host_discovery_prob": d.per_host_discovery_prob,
                "remediation_per_host": _dist_doc(d.remediation_per_host),
            }
        else:
            doc["defender"] = None
    return doc


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(scenario), fh, sort_keys=False)


def bundled_path(name: str) -> str:
    """Filesystem path of a scenario or topology document shipped with the
    package (see ``miakit/scenarios/``)."""
    return str(resources.files("miakit").joinpath("scenarios", name))
