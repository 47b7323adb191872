"""Infrastructure model: directed dependency graph with operational state.

Assets (devices, services, applications, end-user nodes, external links)
are connected by dependency edges pointing from the dependent to the thing
it relies on.  Each asset carries a time-varying operational state; analyses
on top of the graph include reverse reachability, static impact propagation
with witness chains, and a performance factor that composes degradation
along dependency paths.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

ASSET_KINDS = frozenset(
    {"device", "service", "application", "end_user_node", "external_link"}
)
EDGE_KINDS = frozenset({"declared", "discovered_direct", "discovered_indirect"})
STATE_MODES = frozenset(
    {
        "operational",
        "degraded",
        "unavailable",
        "integrity_compromised",
        "confidentiality_compromised",
    }
)


class GraphError(Exception):
    pass


class UnknownAsset(GraphError):
    pass


class UnknownTask(GraphError):
    pass


class DanglingReference(GraphError):
    pass


class DuplicateId(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class TimeRegression(GraphError):
    pass


@dataclass(frozen=True)
class Asset:
    id: str
    kind: str
    name: str = ""
    subnet: str | None = None

    def __post_init__(self):
        if self.kind not in ASSET_KINDS:
            raise ValueError(f"unknown asset kind {self.kind!r}")


@dataclass(frozen=True)
class DependencyEdge:
    """``from_id`` depends on ``to_id``.

    Edges sharing a non-null ``group`` on the same source asset form an
    any-of family (redundant alternatives); ungrouped edges are all-of.
    """

    from_id: str
    to_id: str
    kind: str = "declared"
    weight: float = 1.0
    group: str | None = None

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge kind {self.kind!r}")
        if not (0.0 < self.weight <= 1.0):
            raise ValueError(f"edge weight must be in (0, 1], got {self.weight}")


@dataclass(frozen=True)
class Vulnerability:
    asset_id: str
    exploit_id: str


@dataclass(frozen=True)
class AssetState:
    """One operational mode at a time; ``factor`` only for degraded."""

    mode: str
    factor: float | None = None
    since: float = 0.0

    def __post_init__(self):
        if self.mode not in STATE_MODES:
            raise ValueError(f"unknown state mode {self.mode!r}")
        if self.mode == "degraded":
            if self.factor is None or not (0.0 < self.factor < 1.0):
                raise ValueError("degraded factor must lie strictly in (0, 1)")
        elif self.factor is not None:
            raise ValueError(f"mode {self.mode!r} takes no factor")

    def own_factor(self) -> float:
        if self.mode == "unavailable":
            return 0.0
        if self.mode == "degraded":
            return self.factor  # type: ignore[return-value]
        return 1.0


OPERATIONAL = AssetState("operational")


@dataclass(frozen=True)
class StateChange:
    asset_id: str
    old: AssetState
    new: AssetState
    at: float


class InfrastructureGraph:
    """Validated asset/edge collections plus per-asset state and history."""

    def __init__(self):
        self.assets: dict[str, Asset] = {}
        self.edges: list[DependencyEdge] = []
        self.vulnerabilities: list[Vulnerability] = []
        self.states: dict[str, AssetState] = {}
        self.history: list[StateChange] = []
        self.annotations: list[dict] = []
        self._out: dict[str, list[DependencyEdge]] = {}
        self._in: dict[str, list[DependencyEdge]] = {}
        self._listeners: list[Callable[[StateChange], None]] = []

    # -- construction -------------------------------------------------------

    def _add_asset(self, asset: Asset) -> None:
        if asset.id in self.assets:
            raise DuplicateId(f"asset id {asset.id!r} declared twice")
        self.assets[asset.id] = asset
        self.states[asset.id] = OPERATIONAL
        self._out[asset.id] = []
        self._in[asset.id] = []

    def _add_edge(self, edge: DependencyEdge) -> None:
        for endpoint in (edge.from_id, edge.to_id):
            if endpoint not in self.assets:
                raise DanglingReference(f"edge references unknown asset {endpoint!r}")
        if edge.from_id == edge.to_id:
            raise SelfLoop(f"asset {edge.from_id!r} cannot depend on itself")
        self.edges.append(edge)
        self._out[edge.from_id].append(edge)
        self._in[edge.to_id].append(edge)

    def _add_vulnerability(self, vuln: Vulnerability) -> None:
        if vuln.asset_id not in self.assets:
            raise DanglingReference(f"vulnerability on unknown asset {vuln.asset_id!r}")
        self.vulnerabilities.append(vuln)

    # -- queries ------------------------------------------------------------

    def require(self, asset_id: str) -> Asset:
        try:
            return self.assets[asset_id]
        except KeyError:
            raise UnknownAsset(f"unknown asset {asset_id!r}") from None

    def dependencies_of(self, asset_id: str) -> list[DependencyEdge]:
        self.require(asset_id)
        return self._out[asset_id]

    def dependents_of(self, asset_id: str) -> list[DependencyEdge]:
        self.require(asset_id)
        return self._in[asset_id]

    def end_user_nodes(self) -> list[str]:
        return sorted(a.id for a in self.assets.values() if a.kind == "end_user_node")

    def exploits_on(self, asset_id: str) -> set[str]:
        return {v.exploit_id for v in self.vulnerabilities if v.asset_id == asset_id}

    def neighbors(self, asset_id: str) -> set[str]:
        """Adjacency for lateral movement: shared subnet or any edge, either way."""
        asset = self.require(asset_id)
        near = {e.to_id for e in self._out[asset_id]}
        near |= {e.from_id for e in self._in[asset_id]}
        if asset.subnet is not None:
            near |= {
                a.id
                for a in self.assets.values()
                if a.subnet == asset.subnet and a.id != asset_id
            }
        near.discard(asset_id)
        return near

    # -- state --------------------------------------------------------------

    def subscribe(self, listener: Callable[[StateChange], None]) -> None:
        self._listeners.append(listener)

    def state_of(self, asset_id: str) -> AssetState:
        self.require(asset_id)
        return self.states[asset_id]


def build_graph(spec: Mapping) -> InfrastructureGraph:
    """Build and validate a graph from its structured description.

    ``spec`` mirrors the ``infrastructure`` section of a scenario document:
    ``assets`` (id/kind/name/subnet), ``edges`` (from/to/kind/weight/group)
    and ``vulnerabilities`` (asset/exploit).  All assets start operational.
    """
    graph = InfrastructureGraph()
    for entry in spec.get("assets", []) or []:
        graph._add_asset(
            Asset(
                id=str(entry["id"]),
                kind=str(entry.get("kind", "device")),
                name=str(entry.get("name", entry["id"])),
                subnet=entry.get("subnet"),
            )
        )
    for entry in spec.get("edges", []) or []:
        graph._add_edge(
            DependencyEdge(
                from_id=str(entry["from"]),
                to_id=str(entry["to"]),
                kind=str(entry.get("kind", "declared")),
                weight=float(entry.get("weight", 1.0)),
                group=entry.get("group"),
            )
        )
    for entry in spec.get("vulnerabilities", []) or []:
        graph._add_vulnerability(
            Vulnerability(asset_id=str(entry["asset"]), exploit_id=str(entry["exploit"]))
        )
    return graph


def set_state(
    graph: InfrastructureGraph, asset_id: str, new_state: AssetState, at: float
) -> StateChange:
    """Replace an asset's state at simulated time ``at`` and record the change."""
    old = graph.state_of(asset_id)
    if at < old.since:
        raise TimeRegression(
            f"state change for {asset_id!r} at {at} precedes current since {old.since}"
        )
    stamped = replace(new_state, since=at)
    change = StateChange(asset_id, old, stamped, at)
    graph.states[asset_id] = stamped
    graph.history.append(change)
    for listener in graph._listeners:
        listener(change)
    return change


# ---------------------------------------------------------------------------
# Analyses


def reachable_dependents(graph: InfrastructureGraph, asset_set: Iterable[str]) -> set[str]:
    """Everything that transitively depends on ``asset_set``, the set included.

    Reverse reachability over dependency edges; terminates on cycles.
    """
    seeds = list(asset_set)
    for a in seeds:
        graph.require(a)
    seen = set(seeds)
    frontier = list(seeds)
    while frontier:
        nxt = []
        for node in frontier:
            for edge in graph._in[node]:
                if edge.from_id not in seen:
                    seen.add(edge.from_id)
                    nxt.append(edge.from_id)
        frontier = nxt
    return seen


@dataclass(frozen=True)
class TaskImpact:
    task_id: str
    impacted: bool
    witness: tuple[str, ...] = ()


@dataclass
class StaticImpactReport:
    """Per-task impact verdicts with a dependency chain witnessing each hit."""

    compromised: tuple[str, ...]
    tasks: dict[str, TaskImpact]

    def status(self, task_id: str) -> TaskImpact:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTask(f"unknown task {task_id!r}") from None

    def impacted_tasks(self) -> list[str]:
        return sorted(t for t, s in self.tasks.items() if s.impacted)


def propagate_static_impact(
    graph: InfrastructureGraph,
    compromised: Iterable[str],
    mission_bindings: Mapping[str, Iterable[str]],
) -> StaticImpactReport:
    """Mark each task impacted iff a required asset transitively depends on
    a compromised asset.  Time-free over-approximation of simulated impact.
    """
    seeds = sorted(set(compromised))
    for a in seeds:
        graph.require(a)

    # Parent pointers from a reverse BFS give the witness chain:
    # asset -> ... -> compromised, following dependency direction.
    parent: dict[str, str | None] = {s: None for s in seeds}
    frontier = list(seeds)
    while frontier:
        nxt = []
        for node in frontier:
            for edge in graph._in[node]:
                if edge.from_id not in parent:
                    parent[edge.from_id] = node
                    nxt.append(edge.from_id)
        frontier = nxt

    tasks: dict[str, TaskImpact] = {}
    for task_id in mission_bindings:
        required = list(mission_bindings[task_id])
        for a in required:
            graph.require(a)
        witness: tuple[str, ...] = ()
        impacted = False
        for a in sorted(required):
            if a in parent:
                impacted = True
                chain = [a]
                while parent[chain[-1]] is not None:
                    chain.append(parent[chain[-1]])  # type: ignore[arg-type]
                witness = tuple(chain)
                break
        tasks[str(task_id)] = TaskImpact(str(task_id), impacted, witness)
    return StaticImpactReport(tuple(seeds), tasks)


def _strongly_connected_components(graph: InfrastructureGraph) -> list[list[str]]:
    """Iterative Tarjan over dependency edges; components emitted
    dependencies-first (every component before the ones that rely on it)."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[list[str]] = []
    counter = 0

    for root in sorted(graph.assets):
        if root in index:
            continue
        work = [(root, iter(sorted(e.to_id for e in graph._out[root])))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = low[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append(
                        (succ, iter(sorted(e.to_id for e in graph._out[succ])))
                    )
                    advanced = True
                    break
                if succ in on_stack:
                    low[node] = min(low[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp.append(member)
                    if member == node:
                        break
                components.append(comp)
    return components


def effective_performance_all(graph: InfrastructureGraph) -> dict[str, float]:
    """Performance factor in [0, 1] for every asset.

    factor(a) = own_state(a) x combined dependencies, where ungrouped edges
    contribute their target's factor individually (all-of, min) and edges in
    an any-of group contribute the max over the group's targets.  Members of
    a dependency cycle share one value: the min of their own-state factors,
    scaled by the cycle's external dependencies.
    """
    comps = _strongly_connected_components(graph)
    comp_of: dict[str, int] = {}
    for i, comp in enumerate(comps):
        for member in comp:
            comp_of[member] = i

    value: dict[str, float] = {}
    for i, comp in enumerate(comps):
        members = set(comp)
        own = min(graph.states[a].own_factor() for a in comp)
        contributions: list[float] = []
        for a in sorted(comp):
            grouped: dict[str, list[float]] = {}
            for edge in graph._out[a]:
                if edge.to_id in members:
                    continue  # internal edge, covered by the cycle min rule
                dep_value = value[edge.to_id]
                if edge.group is None:
                    contributions.append(dep_value)
                else:
                    grouped.setdefault(edge.group, []).append(dep_value)
            for alternatives in grouped.values():
                contributions.append(max(alternatives))
        ext = min(contributions) if contributions else 1.0
        comp_value = own * ext
        for member in comp:
            value[member] = comp_value
    return value


def effective_performance(graph: InfrastructureGraph, asset_id: str) -> float:
    graph.require(asset_id)
    return effective_performance_all(graph)[asset_id]
