import numpy as np
import pytest

from bagel.engine import (
    LEAF,
    Decision,
    Problem,
    SearchStats,
    StopCondition,
    bagel_search,
    bound_prune,
    should_stop,
)
from bagel.numerics import make_rng


class TestBoundPrune:
    def test_dominated_node_pruned(self):
        assert bound_prune(0.22, 0.21)

    def test_no_incumbent_keeps(self):
        assert not bound_prune(0.14, None)

    def test_equal_loss_pruned(self):
        assert bound_prune(0.21, 0.21)


class TestShouldStop:
    def test_no_budgets(self):
        assert not should_stop(SearchStats(nodes_opened=10 ** 6, wall_time=10 ** 6), None)

    def test_node_budget_inclusive(self):
        stats = SearchStats(nodes_opened=100)
        assert should_stop(stats, StopCondition(node_budget=100))

    def test_wall_budget(self):
        stats = SearchStats(wall_time=601.0)
        assert should_stop(stats, StopCondition(wall_seconds=600.0))


class SubsetProblem(Problem):
    """Pick a binary subset of k items; loss of a partial state is the loss
    of its best completion's relaxation (min over free = item kept free).

    States are tuples in {0, 1, None}; the trained loss is the sum of per-item
    penalties for items fixed to 0 - an exact lower bound, so pruning is safe.
    A node is a leaf once everything is fixed.
    """

    default_pruning = "exact"

    def __init__(self, penalties):
        self.penalties = np.asarray(penalties, dtype=float)
        self.k = len(self.penalties)

    def root_state(self):
        return (None,) * self.k

    def prune(self, node):
        return True

    def generate(self, node):
        node.payload = node.state

    def train(self, node):
        return float(sum(p for s, p in zip(node.state, self.penalties) if s == 0))

    def is_leaf(self, node):
        return all(s is not None for s in node.state)

    def branch(self, node):
        i = node.state.index(None)
        return [Decision(i, 1, "x%d=1" % i), Decision(i, 0, "x%d=0" % i)]

    def apply(self, state, decision):
        out = list(state)
        out[decision.var] = decision.value
        return tuple(out)

    def extract(self, node):
        return node.state


class RootLeafProblem(SubsetProblem):
    def __init__(self):
        super().__init__([])

    def is_leaf(self, node):
        return True


class TestBagelSearch:
    def test_root_already_leaf(self):
        best, stats = bagel_search(RootLeafProblem())
        assert stats.nodes_opened == 1
        assert best is not None and best.node_id == 0
        assert stats.completed

    def test_node_budget_one_on_nonleaf_root(self):
        best, stats = bagel_search(SubsetProblem([1.0, 2.0]), stop=StopCondition(node_budget=1))
        assert best is None
        assert not stats.completed
        assert stats.nodes_opened == 1

    def test_finds_optimum(self):
        best, stats = bagel_search(SubsetProblem([1.0, 2.0, 3.0]))
        assert best.loss == 0.0
        assert best.model == (1, 1, 1)
        assert stats.completed

    def test_pruning_matches_no_pruning(self):
        rng = make_rng(1)
        for _ in range(10):
            penalties = rng.uniform(0, 2, int(rng.integers(1, 7)))
            with_p, _ = bagel_search(SubsetProblem(penalties), pruning="exact")
            without_p, _ = bagel_search(SubsetProblem(penalties), pruning="off")
            assert with_p.loss == without_p.loss

    def test_node_count_bound(self):
        for k in range(1, 7):
            _, stats = bagel_search(SubsetProblem(np.zeros(k)), pruning="off")
            assert stats.nodes_opened <= 2 ** (k + 1) - 1

    def test_incumbent_loss_non_increasing(self):
        leaves = []
        bagel_search(
            SubsetProblem([3.0, 1.0, 2.0]), pruning="off",
            trace=lambda rec: leaves.append(rec) if rec["status"] == LEAF else None,
        )
        best_so_far = np.inf
        for rec in leaves:
            best_so_far = min(best_so_far, rec["loss"])
        # replaying the trace min matches the exhaustive optimum
        assert best_so_far == 0.0

    def test_dfs_explores_first_child_first(self):
        order = []
        bagel_search(
            SubsetProblem([1.0, 1.0]), pruning="off",
            trace=lambda rec: order.append(tuple(rec["trail"])),
        )
        assert order[0] == ()
        assert order[1] == ("x0=1",)
        assert order[2] == ("x0=1", "x1=1")

    def test_best_first_strategy(self):
        best, stats = bagel_search(SubsetProblem([1.0, 2.0]), strategy="best-first")
        assert best.loss == 0.0
        assert stats.completed

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ValueError):
            bagel_search(SubsetProblem([1.0]), strategy="bogus")

    def test_trace_records_have_schema(self):
        records = []
        bagel_search(SubsetProblem([1.0]), trace=records.append)
        for rec in records:
            assert set(rec) == {"id", "depth", "trail", "loss", "status"}

    def test_stats_accounting(self):
        _, stats = bagel_search(SubsetProblem([1.0, 2.0, 3.0]))
        assert stats.nodes_opened >= stats.leaves + stats.nodes_pruned
