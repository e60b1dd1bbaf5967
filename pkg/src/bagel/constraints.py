"""Finite domains and the constraint layer.

Extended table constraints with pluggable cost functions, the budget
constraint and its propagation rule, pairwise alldifferent filtering, and
the encodings of norm-ball / budget-selection constraints as extended
tables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import DimensionError, lp_distance, masked_l0_cost

# BoolDomain states
ZERO, ONE, BOTH = 0, 1, 2

MAX_COMPONENTS = 25
MAX_ET_ARITY = 10 ** 6


class CapacityError(ValueError):
    """Requested enumeration or table would blow past the hard size guards."""


class BoolDomain:
    """Domain of a 0/1 decision variable.

    Fixing is one-way within a node (BOTH -> ZERO or BOTH -> ONE);
    restoration happens by copying the parent snapshot, never in place.
    """

    __slots__ = ("state",)

    def __init__(self, state=BOTH):
        self.state = state

    def fix(self, value):
        if self.state == BOTH:
            self.state = value
        elif self.state != value:
            raise ValueError("cannot re-fix a fixed domain to a different value")

    @property
    def is_fixed(self):
        return self.state != BOTH

    @property
    def ub(self):
        """Upper bound of the variable: 1 unless fixed to ZERO."""
        return 0 if self.state == ZERO else 1

    def copy(self):
        return BoolDomain(self.state)

    def __repr__(self):
        return "BoolDomain(%s)" % {ZERO: "ZERO", ONE: "ONE", BOTH: "BOTH"}[self.state]


class IntDomain:
    """Ordered finite domain of candidate indices."""

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = set(values)

    def remove(self, value):
        self.values.discard(value)

    @property
    def is_singleton(self):
        return len(self.values) == 1

    @property
    def is_empty(self):
        return not self.values

    def value(self):
        (v,) = self.values
        return v

    def sorted_values(self):
        return sorted(self.values)

    def copy(self):
        return IntDomain(self.values)

    def __len__(self):
        return len(self.values)

    def __contains__(self, v):
        return v in self.values

    def __repr__(self):
        return "IntDomain(%s)" % self.sorted_values()


@dataclass(frozen=True)
class CostFn:
    """Cost function used by extended tables.

    kind:
      - "masked_l0":  c(y, t) = number of active entries of y outside supp(t)
      - "lp":         c(y, t) = ||y - t||_p
      - "masked_lp":  c(y, t) = ||y * (1 - t)||_p  (t binary)
    """

    kind: str
    p: Optional[float] = None
    eps: float = 0.0

    def __call__(self, y, t):
        if self.kind == "masked_l0":
            return float(masked_l0_cost(y, t, self.eps))
        if self.kind == "lp":
            return lp_distance(y, t, self.p)
        if self.kind == "masked_lp":
            y = np.asarray(y, dtype=float)
            t = np.asarray(t, dtype=float)
            if y.shape != t.shape:
                raise DimensionError("y and t must have the same length")
            masked = y * (1.0 - t)
            return lp_distance(masked, np.zeros_like(masked), self.p)
        raise ValueError("unknown cost kind %r" % self.kind)


MASKED_L0 = CostFn("masked_l0")


def lp_cost(p):
    return CostFn("lp", p=p)


def masked_lp_cost(p):
    return CostFn("masked_lp", p=p)


@dataclass(frozen=True)
class ExtendedTable:
    """Table of candidate tuples with a cost function and slack threshold.

    A vector y satisfies the constraint iff some tuple t in the table has
    cost(y, t) <= threshold.
    """

    arity: int
    tuples: np.ndarray  # (n_tuples, arity)
    cost: CostFn
    threshold: float

    def __post_init__(self):
        t = np.asarray(self.tuples, dtype=float)
        if t.ndim != 2 or t.shape[1] != self.arity:
            raise DimensionError("tuples must be 2-d with row length = arity")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        object.__setattr__(self, "tuples", t)


@dataclass(frozen=True)
class BudgetConstraint:
    weights: np.ndarray
    bound: float
    strict: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be >= 0")
        if self.bound <= 0:
            raise ValueError("bound must be > 0")
        object.__setattr__(self, "weights", w)

    def feasible(self, total):
        return total < self.bound if self.strict else total <= self.bound


def et_satisfied(y, et):
    """Check membership up to the table's threshold.

    Returns (satisfied, witness) where witness is the lowest-index tuple
    achieving cost <= threshold, or None.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (et.arity,):
        raise DimensionError("y length must equal the table arity")
    for idx, t in enumerate(et.tuples):
        if et.cost(y, t) <= et.threshold:
            return True, idx
    return False, None


def et_rank_tuples(y, et, order_cost):
    """All tuple indices with their order_cost, ascending, ties by index."""
    y = np.asarray(y, dtype=float)
    if y.shape != (et.arity,):
        raise DimensionError("y length must equal the table arity")
    ranked = [(idx, order_cost(y, t)) for idx, t in enumerate(et.tuples)]
    ranked.sort(key=lambda pair: (pair[1], pair[0]))
    return ranked


def encode_norm_ball_as_et(p, lam, dim):
    """||theta||_p <= lam as a single-tuple extended table."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return ExtendedTable(dim, np.zeros((1, dim)), lp_cost(p), lam)


def enumerate_budget_feasible(weights, bound, strict=True):
    """All 0/1 selections within the budget, in lexicographic order."""
    weights = np.asarray(weights, dtype=float)
    k = len(weights)
    if k > MAX_COMPONENTS:
        raise CapacityError("refusing to enumerate more than %d variables" % MAX_COMPONENTS)
    if np.any(weights < 0):
        raise ValueError("weights must be >= 0")
    out = []
    for u in itertools.product((0, 1), repeat=k):
        total = float(np.dot(u, weights))
        if total < bound if strict else total <= bound:
            out.append(u)
    return out


def _component_fields(c):
    # Accepts (size, weight) pairs or objects with .input_size / .weight.
    if hasattr(c, "input_size"):
        return int(c.input_size), float(c.weight)
    size, weight = c
    return int(size), float(weight)


def encode_smart_design_as_et(components, bound, strict=True):
    """Budget-coupled support selection as an extended table over features.

    Each feasible component selection is expanded into a feature-level
    binary tuple (a component's bit replicated over its input size); a
    parameter vector satisfies the table at threshold 0 iff its support is
    covered by some feasible selection.
    """
    sizes_weights = [_component_fields(c) for c in components]
    if len(sizes_weights) > MAX_COMPONENTS:
        raise CapacityError("too many components")
    arity = sum(s for s, _ in sizes_weights)
    if arity > MAX_ET_ARITY:
        raise CapacityError("expanded table arity exceeds %d" % MAX_ET_ARITY)
    weights = np.array([w for _, w in sizes_weights])
    feasible = enumerate_budget_feasible(weights, bound, strict)
    rows = np.empty((len(feasible), arity))
    for r, u in enumerate(feasible):
        rows[r] = np.concatenate(
            [np.full(size, bit, dtype=float) for (size, _), bit in zip(sizes_weights, u)]
        )
    return ExtendedTable(arity, rows, MASKED_L0, 0.0)


def budget_propagate(domains, weights, bound, strict=True):
    """Fix to ZERO every free variable that can no longer fit the budget.

    S_c is the committed weight of the ONE-fixed variables.  Returns
    (fixings, failed); failed means the committed weight already violates
    the budget.  One pass reaches the fixpoint since S_c only counts fixed
    variables.
    """
    weights = np.asarray(weights, dtype=float)
    over = (lambda a, b: a >= b) if strict else (lambda a, b: a > b)
    committed = sum(
        weights[i] for i, d in enumerate(domains) if d.state == ONE
    )
    if over(committed, bound):
        return [], True
    fixings = []
    for i, d in enumerate(domains):
        if d.state == BOTH and over(weights[i] + committed, bound):
            d.fix(ZERO)
            fixings.append((i, ZERO))
    return fixings, False


def alldifferent_filter(domains):
    """Pairwise-decomposition alldifferent filtering to fixpoint.

    Singleton domains remove their value from every other domain.  Returns
    (pruned, failed) where pruned lists (var, removed values); failed means
    a domain emptied or two singletons collide.
    """
    removed = {i: [] for i in range(len(domains))}
    changed = True
    while changed:
        changed = False
        for i, d in enumerate(domains):
            if not d.is_singleton:
                continue
            v = d.value()
            for j, other in enumerate(domains):
                if j == i:
                    continue
                if other.is_singleton and other.value() == v:
                    pruned = [(k, vals) for k, vals in removed.items() if vals]
                    return pruned, True
                if v in other:
                    other.remove(v)
                    removed[j].append(v)
                    changed = True
                    if other.is_empty:
                        pruned = [(k, vals) for k, vals in removed.items() if vals]
                        return pruned, True
    pruned = [(k, vals) for k, vals in removed.items() if vals]
    return pruned, False
