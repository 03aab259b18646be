"""Causal DAGs, basic-structure classification and interaction-time plans.

Edges carry a :class:`TimeLaw`, an interval ``[low, high]`` with a nominal
``mean`` for the lag between a cause state change and its effect. Sequential
transmission adds lags; several effects triggered by one cause are covered by
the largest lag.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import GraphError, PlanError

STATE_KINDS = ("steady", "transient")


@dataclass(frozen=True)
class TimeLaw:
    mean: float
    low: float
    high: float

    def __post_init__(self):
        for name in ("mean", "low", "high"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0 <= self.low <= self.mean <= self.high:
            raise ValueError(f"need 0 <= low <= mean <= high, got {self}")

    @classmethod
    def exact(cls, t: float) -> "TimeLaw":
        return cls(t, t, t)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "low": self.low, "high": self.high}


ZERO_LAW = TimeLaw(0.0, 0.0, 0.0)


def chain_time(t_cb: TimeLaw, t_ba: TimeLaw) -> TimeLaw:
    """Lag of a two-edge chain: component-wise sum."""
    return TimeLaw(t_cb.mean + t_ba.mean, t_cb.low + t_ba.low, t_cb.high + t_ba.high)


def fork_time(times: Sequence[TimeLaw]) -> TimeLaw:
    """Window covering every effect of a common cause: component-wise max."""
    times = list(times)
    if not times:
        raise ValueError("fork_time needs at least one TimeLaw")
    return TimeLaw(max(t.mean for t in times), max(t.low for t in times),
                   max(t.high for t in times))


class Op(str, Enum):
    LAW = "LAW"
    SUM = "SUM"
    MAX = "MAX"


@dataclass(frozen=True)
class TimeExpression:
    """Expression tree over TimeLaws with SUM and MAX nodes."""

    op: Op
    law: TimeLaw | None = None
    children: tuple["TimeExpression", ...] = ()

    def __post_init__(self):
        if self.op == Op.LAW:
            if self.law is None or self.children:
                raise ValueError("a LAW node holds exactly one TimeLaw")
        elif not self.children:
            raise ValueError(f"{self.op.value} needs at least one operand")

    @classmethod
    def leaf(cls, law: TimeLaw) -> "TimeExpression":
        return cls(Op.LAW, law)

    @classmethod
    def sum(cls, parts: Iterable["TimeExpression"]) -> "TimeExpression":
        return cls(Op.SUM, None, tuple(parts))

    @classmethod
    def max(cls, parts: Iterable["TimeExpression"]) -> "TimeExpression":
        return cls(Op.MAX, None, tuple(parts))

    def evaluate(self) -> TimeLaw:
        if self.op == Op.LAW:
            return self.law
        values = [c.evaluate() for c in self.children]
        if self.op == Op.MAX:
            return fork_time(values)
        out = values[0]
        for v in values[1:]:
            out = chain_time(out, v)
        return out

    def to_dict(self) -> dict:
        if self.op == Op.LAW:
            return {"op": "LAW", **self.law.to_dict()}
        return {"op": self.op.value, "args": [c.to_dict() for c in self.children]}

    @classmethod
    def from_dict(cls, doc: dict) -> "TimeExpression":
        op = Op(doc["op"])
        if op == Op.LAW:
            return cls.leaf(TimeLaw(doc["mean"], doc["low"], doc["high"]))
        return cls(op, None, tuple(cls.from_dict(a) for a in doc["args"]))

    def __str__(self) -> str:
        if self.op == Op.LAW:
            return f"{self.law.mean:g}"
        return f"{self.op.value}(" + ", ".join(str(c) for c in self.children) + ")"


@dataclass(frozen=True)
class CausalNode:
    id: str
    observable: bool = True
    state_kind: str | None = "steady"

    def __post_init__(self):
        if self.state_kind is not None and self.state_kind not in STATE_KINDS:
            raise GraphError(f"node {self.id!r}: state_kind must be one of {STATE_KINDS}")


@dataclass(frozen=True)
class Edge:
    cause: str
    effect: str
    law: TimeLaw


class CausalGraph:
    """Immutable DAG with unique node ids and at most one edge per ordered pair."""

    def __init__(self, nodes: Iterable[CausalNode], edges: Iterable[Edge]):
        self.nodes: dict[str, CausalNode] = {}
        for n in nodes:
            if n.id in self.nodes:
                raise GraphError(f"duplicate node id {n.id!r}")
            self.nodes[n.id] = n
        self.edges: dict[tuple[str, str], Edge] = {}
        self._children: dict[str, list[str]] = {k: [] for k in self.nodes}
        self._parents: dict[str, list[str]] = {k: [] for k in self.nodes}
        for e in edges:
            for end in (e.cause, e.effect):
                if end not in self.nodes:
                    raise GraphError(f"edge {e.cause}->{e.effect} references unknown node {end!r}")
            if e.cause == e.effect:
                raise GraphError(f"self-loop on {e.cause!r}")
            if (e.cause, e.effect) in self.edges:
                raise GraphError(f"duplicate edge {e.cause}->{e.effect}")
            self.edges[(e.cause, e.effect)] = e
            self._children[e.cause].append(e.effect)
            self._parents[e.effect].append(e.cause)
        for e in self.edges.values():
            if self.nodes[e.cause].state_kind is None:
                raise GraphError(f"cause node {e.cause!r} needs a state_kind")
        self.order = self._topological_order()

    def _topological_order(self) -> list[str]:
        indeg = {k: len(v) for k, v in self._parents.items()}
        ready = [k for k in self.nodes if indeg[k] == 0]
        order = []
        while ready:
            k = ready.pop(0)
            order.append(k)
            for c in self._children[k]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            stuck = sorted(k for k in self.nodes if indeg[k] > 0)
            raise GraphError(f"graph has a directed cycle through {stuck}")
        return order

    def children(self, node: str) -> list[str]:
        return list(self._children[node])

    def parents(self, node: str) -> list[str]:
        return list(self._parents[node])

    def law(self, cause: str, effect: str) -> TimeLaw:
        return self.edges[(cause, effect)].law

    def _check(self, *ids):
        for i in ids:
            if i not in self.nodes:
                raise GraphError(f"unknown node {i!r}")

    def paths(self, src: str, dst: str) -> list[tuple[str, ...]]:
        """All directed paths from ``src`` to ``dst`` in lexicographic order."""
        self._check(src, dst)
        out: list[tuple[str, ...]] = []

        def walk(node, trail):
            if node == dst:
                out.append(tuple(trail))
                return
            for c in sorted(self._children[node]):
                trail.append(c)
                walk(c, trail)
                trail.pop()

        walk(src, [src])
        return out

    def ancestors(self, node: str) -> set[str]:
        self._check(node)
        seen: set[str] = set()
        stack = list(self._parents[node])
        while stack:
            k = stack.pop()
            if k not in seen:
                seen.add(k)
                stack.extend(self._parents[k])
        return seen

    # JSON ---------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "observable": n.observable, "state_kind": n.state_kind}
                      for n in self.nodes.values()],
            "edges": [{"cause": e.cause, "effect": e.effect, **e.law.to_dict()}
                      for e in self.edges.values()],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CausalGraph":
        try:
            nodes = [CausalNode(str(n["id"]), bool(n.get("observable", True)),
                                n.get("state_kind", "steady")) for n in doc["nodes"]]
            edges = []
            for e in doc["edges"]:
                mean = float(e.get("mean", 0.0))
                law = TimeLaw(mean, float(e.get("low", mean)), float(e.get("high", mean)))
                edges.append(Edge(str(e["cause"]), str(e["effect"]), law))
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph document: missing or bad field {exc}") from None
        except ValueError as exc:
            raise GraphError(f"malformed graph document: {exc}") from None
        return cls(nodes, edges)

    @classmethod
    def from_json(cls, text: str) -> "CausalGraph":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
                             f"{exc.msg}") from None
        return cls.from_dict(doc)


STRUCTURES = ("chain", "fork", "collider", "confounder", "other")


def classify_structure(graph: CausalGraph, nodes) -> str:
    """Name the basic structure induced by three nodes."""
    ids = list(dict.fromkeys(nodes))
    if len(ids) != 3:
        raise GraphError("classify_structure takes exactly three distinct nodes")
    graph._check(*ids)
    sub = [(a, b) for a in ids for b in ids if (a, b) in graph.edges]
    linked = {frozenset(e) for e in sub}
    # Three nodes are connected iff at least two distinct pairs are linked.
    if len(linked) < 2:
        raise GraphError(f"nodes {ids} do not induce a connected subgraph")
    outdeg = {k: sum(1 for a, _ in sub if a == k) for k in ids}
    indeg = {k: sum(1 for _, b in sub if b == k) for k in ids}
    if len(sub) == 3 and sorted(outdeg.values()) == [0, 1, 2]:
        return "confounder"
    if len(sub) == 2:
        if 2 in outdeg.values():
            return "fork"
        if 2 in indeg.values():
            return "collider"
        return "chain"
    return "other"


@dataclass(frozen=True)
class ItmBinding:
    cause: str
    expression: TimeExpression

    @property
    def law(self) -> TimeLaw:
        return self.expression.evaluate()


@dataclass(frozen=True)
class PathNote:
    path: tuple[str, ...]
    law: TimeLaw


@dataclass(frozen=True)
class SelfLabelingPlan:
    target_pair: tuple[str, str]
    itm_bindings: tuple[ItmBinding, ...]
    required_observers: tuple[str, ...]
    path_notes: tuple[PathNote, ...] = ()
    unresolved: tuple[str, ...] = field(default=())

    def binding(self, cause: str) -> ItmBinding:
        for b in self.itm_bindings:
            if b.cause == cause:
                return b
        raise KeyError(cause)

    @property
    def causes(self) -> tuple[str, ...]:
        return tuple(b.cause for b in self.itm_bindings)

    def to_dict(self) -> dict:
        return {
            "target_pair": list(self.target_pair),
            "itm_bindings": [{"cause": b.cause, "expression": b.expression.to_dict(),
                              "composed": b.law.to_dict()} for b in self.itm_bindings],
            "required_observers": list(self.required_observers),
            "path_notes": [{"path": list(p.path), **p.law.to_dict()} for p in self.path_notes],
            "unresolved": list(self.unresolved),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SelfLabelingPlan":
        return cls(
            target_pair=tuple(doc["target_pair"]),
            itm_bindings=tuple(ItmBinding(b["cause"], TimeExpression.from_dict(b["expression"]))
                               for b in doc["itm_bindings"]),
            required_observers=tuple(doc["required_observers"]),
            path_notes=tuple(PathNote(tuple(p["path"]), TimeLaw(p["mean"], p["low"], p["high"]))
                             for p in doc.get("path_notes", [])),
            unresolved=tuple(doc.get("unresolved", [])),
        )

    def summary(self) -> str:
        lines = [f"target {self.target_pair[0]} -> {self.target_pair[1]}"]
        for p in self.path_notes:
            lines.append(f"  path {'->'.join(p.path)}: mean {p.law.mean:g} "
                         f"[{p.law.low:g}, {p.law.high:g}]")
        for b in self.itm_bindings:
            law = b.law
            lines.append(f"  ITM for {b.cause}: {b.expression} = {law.mean:g} "
                         f"[{law.low:g}, {law.high:g}]")
        lines.append(f"  observe: {', '.join(self.required_observers)}")
        if self.unresolved:
            lines.append(f"  unobservable disambiguators: {', '.join(self.unresolved)}")
        return "\n".join(lines) + "\n"


def _path_expression(graph: CausalGraph, path: Sequence[str]) -> TimeExpression:
    return TimeExpression.sum(TimeExpression.leaf(graph.law(a, b))
                              for a, b in zip(path[:-1], path[1:]))


def _cause_expression(graph: CausalGraph, paths) -> TimeExpression:
    exprs = [_path_expression(graph, p) for p in paths]
    return exprs[0] if len(exprs) == 1 else TimeExpression.max(exprs)


def build_labeling_plan(graph: CausalGraph, cause_id: str, effect_id: str) -> SelfLabelingPlan:
    """Plan which ITMs to train and which nodes to observe for one cause/effect pair.

    Every directed path is composed by summing edge lags. With several paths
    the cause's window is their max, and nodes that lie on only some of the
    paths must be observed when the composed lags differ. Other parents of the
    effect whose state is transient each get their own ITM.
    """
    graph._check(cause_id, effect_id)
    if not graph.nodes[effect_id].observable:
        raise PlanError(f"effect node {effect_id!r} is not observable")
    paths = graph.paths(cause_id, effect_id)
    if cause_id == effect_id or not paths:
        raise PlanError(f"{effect_id!r} is not reachable from {cause_id!r}")
    notes = tuple(PathNote(p, _path_expression(graph, p).evaluate()) for p in paths)
    bindings = [ItmBinding(cause_id, _cause_expression(graph, paths))]

    on_paths = {n for p in paths for n in p}
    for sib in sorted(graph.parents(effect_id)):
        if sib in on_paths or graph.nodes[sib].state_kind != "transient":
            continue
        bindings.append(ItmBinding(sib, _cause_expression(graph, graph.paths(sib, effect_id))))

    observers = [effect_id]
    unresolved = []
    if len({(n.law.mean, n.law.low, n.law.high) for n in notes}) > 1:
        shared = set.intersection(*(set(p) for p in paths))
        for node in graph.order:
            if node in on_paths and node not in shared:
                (observers if graph.nodes[node].observable else unresolved).append(node)
    return SelfLabelingPlan((cause_id, effect_id), tuple(bindings), tuple(observers), notes,
                            tuple(unresolved))


def ball_drop_graph(interaction_time: float = 10.0) -> CausalGraph:
    """Lumped graph of the two-ball experiment: each drop causes the resting layout."""
    law = TimeLaw(interaction_time, 0.0, 6.0 * interaction_time)
    return CausalGraph(
        [CausalNode("ball1", True, "transient"), CausalNode("ball2", True, "transient"),
         CausalNode("layout", True, "steady")],
        [Edge("ball1", "layout", law), Edge("ball2", "layout", law)],
    )
