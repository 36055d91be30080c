"""Call-tree profiling and runtime-situation identification.

Regions are instrumented code sections; the tree records one node per distinct
call path, with inclusive timing on function nodes. Parameter annotations open
context subtrees so the same function called under different parameter values
becomes distinct runtime situations. A node whose mean runtime is long enough,
and whose time is not dominated by long-running children, is a tuning
candidate.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any

FUNCTION = "function"
PARAMETER = "parameter"

#: Mean-runtime threshold separating tunable regions from ones whose
#: granularity is too fine for a frequency switch to pay off.
DEFAULT_THRESHOLD_MS = 100.0


class CallTreeError(Exception):
    """Structural misuse of the region API."""


class MismatchedExit(CallTreeError):
    """exit_region did not match the innermost open region."""


def _escape(text: str, escape_eq: bool) -> str:
    out = text.replace("\\", "\\\\").replace("/", "\\/")
    if escape_eq:
        out = out.replace("=", "\\=")
    return out


@dataclass(frozen=True)
class RtsId:
    """Identity of a runtime situation: the root-to-node path.

    Each segment is (kind, name, value); value is None for function segments.
    The string form joins segments with "/", renders parameter segments as
    name=value, and escapes "/" (plus "=" in names) so it stays injective.
    """

    path: tuple[tuple[str, str, Any], ...]

    def __str__(self) -> str:
        parts = []
        for kind, name, value in self.path:
            if kind == PARAMETER:
                parts.append(f"{_escape(name, True)}={_escape(str(value), False)}")
            else:
                parts.append(_escape(name, True))
        return "/".join(parts)


class CallTreeNode:
    """One node of the profile tree.

    Function nodes carry call_count and inclusive total_time_ms. Parameter
    nodes only partition the tree; they hold no timing of their own.
    """

    __slots__ = ("kind", "name", "value", "parent", "children", "call_count", "total_time_ms")

    def __init__(self, kind: str, name: str, value: Any = None, parent: CallTreeNode | None = None):
        self.kind = kind
        self.name = name
        self.value = value
        self.parent = parent
        self.children: dict[tuple[str, str, Any], CallTreeNode] = {}
        self.call_count = 0
        self.total_time_ms = 0.0

    def child(self, kind: str, name: str, value: Any = None) -> CallTreeNode:
        """Fetch or create the child for (kind, name, value)."""
        key = (kind, name, value)
        node = self.children.get(key)
        if node is None:
            node = CallTreeNode(kind, name, value, parent=self)
            self.children[key] = node
        return node

    def __repr__(self) -> str:
        return f"<{self.kind} {self.name!r} calls={self.call_count} total={self.total_time_ms}ms>"


class _Frame:
    __slots__ = ("node", "t_enter", "params")

    def __init__(self, node: CallTreeNode, t_enter: float):
        self.node = node
        self.t_enter = t_enter
        # name -> value, insertion-ordered; re-setting a name keeps its slot
        self.params: dict[str, Any] = {}


class CallTree:
    """Incremental profile built from enter/exit/parameter events.

    The root is the function node "main". Parameters set inside an open region
    scope nested enters under parameter nodes until that region exits; setting
    the same name again replaces its value, so two values of one parameter
    produce sibling subtrees.
    """

    def __init__(self, root: CallTreeNode | None = None):
        self.root = root
        self._frames: list[_Frame] = []

    @property
    def depth(self) -> int:
        return len(self._frames)

    def _attach_point(self, frame: _Frame) -> CallTreeNode:
        node = frame.node
        for name, value in frame.params.items():
            node = node.child(PARAMETER, name, value)
        return node

    def current_node(self) -> CallTreeNode | None:
        """Innermost open function node, or None outside main."""
        return self._frames[-1].node if self._frames else None

    def enter_region(self, name: str, t_ms: float) -> CallTreeNode:
        if not self._frames:
            if name != "main":
                raise CallTreeError(f"first region must be 'main', got {name!r}")
            if self.root is None:
                self.root = CallTreeNode(FUNCTION, "main")
            node = self.root
        else:
            node = self._attach_point(self._frames[-1]).child(FUNCTION, name)
        node.call_count += 1
        self._frames.append(_Frame(node, t_ms))
        return node

    def exit_region(self, name: str, t_ms: float) -> float:
        """Close the innermost region, crediting its inclusive elapsed time."""
        if not self._frames:
            raise MismatchedExit(f"exit of {name!r} with no open region")
        frame = self._frames[-1]
        if frame.node.name != name:
            raise MismatchedExit(f"exit of {name!r} but {frame.node.name!r} is open")
        elapsed = t_ms - frame.t_enter
        frame.node.total_time_ms += elapsed
        self._frames.pop()
        return elapsed

    def set_parameter(self, name: str, value: Any) -> CallTreeNode:
        if not self._frames:
            raise CallTreeError("set_parameter outside any open region")
        frame = self._frames[-1]
        frame.params[name] = value
        return self._attach_point(frame)


def rts_path(node: CallTreeNode) -> RtsId:
    segments = []
    cur: CallTreeNode | None = node
    while cur is not None:
        segments.append((cur.kind, cur.name, cur.value))
        cur = cur.parent
    return RtsId(tuple(reversed(segments)))


def function_children(node: CallTreeNode) -> Iterator[CallTreeNode]:
    """Function nodes directly below, looking through parameter nodes."""
    for child in node.children.values():
        if child.kind == FUNCTION:
            yield child
        else:
            yield from function_children(child)


def is_tuning_candidate(node: CallTreeNode, threshold_ms: float = DEFAULT_THRESHOLD_MS) -> bool:
    """Decide whether a profiled function is worth tuning.

    The node's own mean runtime must exceed the threshold. A leaf then
    qualifies outright. An internal node qualifies only when the combined
    runtime of its short children (mean below the threshold) exceeds the
    combined runtime of its long children: if long children dominate, tuning
    happens there instead.
    """
    if node.kind != FUNCTION or node.call_count < 1:
        return False
    if node.total_time_ms / node.call_count <= threshold_ms:
        return False
    short_ms = 0.0
    long_ms = 0.0
    is_leaf = True
    for child in function_children(node):
        is_leaf = False
        if child.call_count == 0:
            continue
        if child.total_time_ms / child.call_count < threshold_ms:
            short_ms += child.total_time_ms
        else:
            long_ms += child.total_time_ms
    if is_leaf:
        return True
    return short_ms > long_ms


def candidate_nodes(tree: CallTree, threshold_ms: float = DEFAULT_THRESHOLD_MS) -> list[CallTreeNode]:
    """All function nodes in the tree that currently pass the candidate rule."""
    found: list[CallTreeNode] = []
    if tree.root is None:
        return found
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.kind == FUNCTION and is_tuning_candidate(node, threshold_ms):
            found.append(node)
        stack.extend(reversed(list(node.children.values())))
    return found


@dataclass(frozen=True)
class RegionEvent:
    """One replayable instrumentation event."""

    kind: str  # "enter" | "exit" | "parameter"
    name: str
    value: Any = None
    t_ms: float = 0.0


def apply_event(tree: CallTree, event: RegionEvent) -> None:
    if event.kind == "enter":
        tree.enter_region(event.name, event.t_ms)
    elif event.kind == "exit":
        tree.exit_region(event.name, event.t_ms)
    elif event.kind == "parameter":
        tree.set_parameter(event.name, event.value)
    else:
        raise CallTreeError(f"unknown event kind {event.kind!r}")


def replay(events: Iterable[RegionEvent]) -> CallTree:
    tree = CallTree()
    for ev in events:
        apply_event(tree, ev)
    return tree


def read_events_jsonl(path: str | Path) -> list[RegionEvent]:
    """Load events from a JSON-lines file with keys kind/name/value/t_ms."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            events.append(
                RegionEvent(
                    kind=raw["kind"],
                    name=raw["name"],
                    value=raw.get("value"),
                    t_ms=float(raw.get("t_ms", 0.0)),
                )
            )
    return events


def node_to_dict(node: CallTreeNode) -> dict[str, Any]:
    return {
        "kind": node.kind,
        "name": node.name,
        "value": node.value,
        "call_count": node.call_count,
        "total_time_ms": node.total_time_ms,
        "children": [node_to_dict(c) for c in node.children.values()],
    }


def node_from_dict(data: dict[str, Any], parent: CallTreeNode | None = None) -> CallTreeNode:
    node = CallTreeNode(data["kind"], data["name"], data.get("value"), parent=parent)
    node.call_count = int(data["call_count"])
    node.total_time_ms = float(data["total_time_ms"])
    for child in data.get("children", []):
        built = node_from_dict(child, parent=node)
        node.children[(built.kind, built.name, built.value)] = built
    return node
