"""Generic branch / generate / train tree search.

Each node carries a domain snapshot owned by the problem.  Processing a
node runs, in order: problem filtering (prune), subproblem generation,
training, bound pruning against the incumbent, the leaf test, and finally
branching.  The default frontier discipline is depth-first with children
pushed so the first branch decision is explored first.
"""

from __future__ import annotations

import heapq
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, List, Optional

# Node statuses
OPEN = "open"
TRAINED = "trained"
LEAF = "leaf"
PRUNED = "pruned"
FAILED = "failed"

CHILD_LOSS_TOL = 1e-9


@dataclass(frozen=True)
class Decision:
    var: int
    value: int
    label: str


class Node:
    __slots__ = (
        "id", "depth", "trail", "state", "payload", "trained_loss",
        "model", "status", "parent_loss",
    )

    def __init__(self, node_id, depth, trail, state, parent_loss=None):
        self.id = node_id
        self.depth = depth
        self.trail = trail  # tuple of Decision
        self.state = state
        self.payload = None  # generated subproblem data (e.g. a mask)
        self.trained_loss = None
        self.model = None
        self.status = OPEN
        self.parent_loss = parent_loss

    def trail_labels(self):
        return [d.label for d in self.trail]


@dataclass
class Incumbent:
    node_id: int
    loss: float
    model: Any


@dataclass
class StopCondition:
    wall_seconds: Optional[float] = None
    node_budget: Optional[int] = None


@dataclass
class SearchStats:
    nodes_opened: int = 0
    nodes_pruned: int = 0
    nodes_failed: int = 0
    leaves: int = 0
    wall_time: float = 0.0
    completed: bool = False
    warnings: List[str] = field(default_factory=list)


class Problem(ABC):
    """Contract every searchable problem implements.

    Child states must be monotonically restrictive: applying a decision
    only shrinks the reachable model space, so trained losses never
    decrease down a branch (up to solver noise).
    """

    default_pruning = "exact"  # "exact" | "heuristic" | "off"

    @abstractmethod
    def root_state(self):
        ...

    @abstractmethod
    def prune(self, node) -> bool:
        """Filter node.state in place; return False if the node failed."""

    @abstractmethod
    def generate(self, node) -> None:
        """Build the restricted subproblem; store it on node.payload."""

    @abstractmethod
    def train(self, node) -> float:
        """Optimise the generated subproblem; store the model, return loss."""

    @abstractmethod
    def is_leaf(self, node) -> bool:
        ...

    @abstractmethod
    def branch(self, node) -> List[Decision]:
        """Ordered child decisions; first entry is explored first (DFS)."""

    @abstractmethod
    def apply(self, state, decision):
        """Return a fresh child state = copy of state with decision applied."""

    @abstractmethod
    def extract(self, node):
        """Map the trained subproblem solution back to a full assignment."""


def bound_prune(node_loss, incumbent_loss):
    """True when the node cannot beat the best leaf found so far (inclusive)."""
    return incumbent_loss is not None and node_loss >= incumbent_loss


def should_stop(stats, stop):
    if stop is None:
        return False
    if stop.wall_seconds is not None and stats.wall_time >= stop.wall_seconds:
        return True
    if stop.node_budget is not None and stats.nodes_opened >= stop.node_budget:
        return True
    return False


def bagel_search(problem, stop=None, strategy="dfs", pruning=None, trace=None):
    """Run the tree search; returns (best incumbent or None, stats).

    strategy: "dfs" (default) or "best-first" (by parent trained loss).
    pruning: "exact" / "heuristic" enable bound pruning against the
    incumbent ("heuristic" signals the trained loss is only an approximate
    bound); "off" disables it.  Defaults to problem.default_pruning.
    trace: optional callable receiving one dict per processed node.
    """
    if strategy not in ("dfs", "best-first"):
        raise ValueError("unknown strategy %r" % strategy)
    if pruning is None:
        pruning = problem.default_pruning
    if pruning not in ("exact", "heuristic", "off"):
        raise ValueError("unknown pruning mode %r" % pruning)

    t0 = time.perf_counter()
    stats = SearchStats()
    incumbent = None
    next_id = 1
    root = Node(0, 0, (), problem.root_state())
    if strategy == "dfs":
        frontier = [root]
        pop = frontier.pop
        def push(children):
            frontier.extend(reversed(children))
    else:
        frontier = [(0.0, root.id, root)]
        def pop():
            return heapq.heappop(frontier)[2]
        def push(children):
            for c in children:
                heapq.heappush(frontier, (c.parent_loss, c.id, c))

    def emit(node):
        if trace is not None:
            trace({
                "id": node.id,
                "depth": node.depth,
                "trail": node.trail_labels(),
                "loss": node.trained_loss,
                "status": node.status,
            })

    stopped = False
    while frontier:
        stats.wall_time = time.perf_counter() - t0
        if should_stop(stats, stop):
            stopped = True
            break
        node = pop()
        stats.nodes_opened += 1

        if not problem.prune(node):
            node.status = FAILED
            stats.nodes_failed += 1
            emit(node)
            continue
        problem.generate(node)
        loss = problem.train(node)
        node.trained_loss = loss
        node.status = TRAINED
        if node.parent_loss is not None and loss < node.parent_loss - CHILD_LOSS_TOL * max(
            1.0, abs(node.parent_loss)
        ):
            stats.warnings.append(
                "node %d loss %.12g below parent loss %.12g" % (node.id, loss, node.parent_loss)
            )
        if pruning != "off" and bound_prune(loss, incumbent.loss if incumbent else None):
            node.status = PRUNED
            stats.nodes_pruned += 1
            emit(node)
            continue
        if problem.is_leaf(node):
            node.status = LEAF
            stats.leaves += 1
            if incumbent is None or loss < incumbent.loss:
                incumbent = Incumbent(node.id, loss, problem.extract(node))
            emit(node)
            continue
        children = []
        for decision in problem.branch(node):
            child = Node(
                next_id, node.depth + 1, node.trail + (decision,),
                problem.apply(node.state, decision), parent_loss=loss,
            )
            next_id += 1
            children.append(child)
        push(children)
        emit(node)

    stats.wall_time = time.perf_counter() - t0
    stats.completed = not stopped and not frontier
    return incumbent, stats
