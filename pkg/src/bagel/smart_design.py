"""Budget-constrained component selection for linear regression.

A model is a coefficient vector over features grouped into components;
activating a component costs its weight and the total activated weight
must stay under the budget.  The search problem, two greedy repair
baselines, a seeded instance generator, and evaluation helpers live here.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import constraints, numerics
from .constraints import BOTH, ONE, ZERO, BoolDomain
from .engine import Decision, Problem, bagel_search

FEATURE_GRID = (10, 20, 40, 70, 100, 130, 150, 180, 200, 225, 250, 300, 350)
SAMPLE_GRID = (100, 400, 700, 1000, 1500, 3000, 7000, 10000)
COST_GRID = (0.90, 0.80, 0.60, 0.30)


@dataclass(frozen=True)
class Component:
    input_size: int
    weight: float

    def __post_init__(self):
        if self.input_size < 1:
            raise ValueError("input_size must be >= 1")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")


@dataclass
class SmartDesignInstance:
    X: np.ndarray
    y: np.ndarray
    components: List[Component]
    bound: float
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.X = numerics.matrix(self.X)
        self.y = numerics.vector(self.y)
        d = sum(c.input_size for c in self.components)
        if d != self.X.shape[1]:
            raise ValueError("component sizes must partition the feature axis")
        if len(self.y) != self.X.shape[0]:
            raise ValueError("y length must match the sample axis")
        if self.bound <= 0:
            raise ValueError("bound must be > 0")

    @property
    def weights(self):
        return np.array([c.weight for c in self.components])

    def feature_slices(self):
        """Per-component index ranges partitioning the feature axis."""
        out, start = [], 0
        for c in self.components:
            out.append(slice(start, start + c.input_size))
            start += c.input_size
        return out


@dataclass
class DesignSolution:
    u: np.ndarray
    theta: np.ndarray
    train_loss: float
    test_loss: Optional[float] = None


def expand_mask(states_ub, components):
    """Replicate per-component activation bits over their feature blocks."""
    return np.concatenate(
        [np.full(c.input_size, float(b)) for b, c in zip(states_ub, components)]
    )


def sd_tightness(u, weights, bound):
    """Fraction of the budget consumed by the active components."""
    if bound <= 0:
        raise ValueError("bound must be > 0")
    return float(np.dot(u, weights) / bound)


def sd_evaluate(solution, X_test, y_test):
    """Euclidean residual norm of the solution on held-out data."""
    X_test = np.asarray(X_test, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if X_test.shape[1] != len(solution.theta) or X_test.shape[0] != len(y_test):
        raise numerics.DimensionError("test split shapes are inconsistent")
    return float(np.linalg.norm(X_test @ solution.theta - y_test))


class SmartDesignProblem(Problem):
    """Search over component activations; training is masked least squares."""

    default_pruning = "exact"

    def __init__(self, X, y, components, bound, strict=True):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.components = list(components)
        self.bound = float(bound)
        self.strict = strict
        self.weights = np.array([c.weight for c in self.components])

    @classmethod
    def from_instance(cls, instance, strict=True):
        return cls(instance.X, instance.y, instance.components, instance.bound, strict)

    def root_state(self):
        return [BoolDomain(BOTH) for _ in self.components]

    def prune(self, node):
        _, failed = constraints.budget_propagate(
            node.state, self.weights, self.bound, self.strict
        )
        return not failed

    def generate(self, node):
        node.payload = expand_mask([d.ub for d in node.state], self.components)

    def train(self, node):
        theta, loss = numerics.solve_least_squares(self.X, self.y, node.payload)
        node.model = theta
        return loss

    def is_leaf(self, node):
        # Every completion of the free variables fits the budget.
        total = sum(w for w, d in zip(self.weights, node.state) if d.state != ZERO)
        return total < self.bound if self.strict else total <= self.bound

    def branch(self, node):
        for i, d in enumerate(node.state):
            if d.state == BOTH:
                return [
                    Decision(i, 0, "u%d=0" % (i + 1)),
                    Decision(i, 1, "u%d=1" % (i + 1)),
                ]
        raise RuntimeError("branch() called on a node with no free variable")

    def apply(self, state, decision):
        child = [d.copy() for d in state]
        child[decision.var].fix(ONE if decision.value else ZERO)
        return child

    def extract(self, node):
        u = np.array([d.ub for d in node.state])
        return DesignSolution(u=u, theta=node.model.copy(), train_loss=node.trained_loss)


def _component_scores(theta, components, aggregation="max"):
    scores, start = [], 0
    for c in components:
        block = np.abs(theta[start:start + c.input_size])
        scores.append(float(np.max(block)) if aggregation == "max" else float(np.linalg.norm(block)))
        start += c.input_size
    return np.array(scores)


def baseline_l2_br(X, y, components, bound, strict=True, aggregation="max"):
    """Basic repair: fit once, drop lowest-coefficient components until the
    budget holds, then refit once on the survivors."""
    weights = np.array([c.weight for c in components])
    d = sum(c.input_size for c in components)
    theta, _ = numerics.solve_least_squares(X, y, np.ones(d))
    scores = _component_scores(theta, components, aggregation)
    u = np.ones(len(components), dtype=int)
    feasible = lambda total: total < bound if strict else total <= bound
    for i in np.argsort(scores, kind="stable"):
        if feasible(float(np.dot(u, weights))):
            break
        u[i] = 0
    theta, loss = numerics.solve_least_squares(X, y, expand_mask(u, components))
    return DesignSolution(u=u, theta=theta, train_loss=loss)


def baseline_l2_or(X, y, components, bound, strict=True, aggregation="max"):
    """Ratio repair: iteratively drop the component with the lowest
    coefficient-over-weight ratio, refitting after every removal."""
    weights = np.array([c.weight for c in components])
    u = np.ones(len(components), dtype=int)
    feasible = lambda total: total < bound if strict else total <= bound
    theta, loss = numerics.solve_least_squares(X, y, expand_mask(u, components))
    while not feasible(float(np.dot(u, weights))):
        scores = _component_scores(theta, components, aggregation)
        ratios = np.where(weights > 0, scores / np.maximum(weights, 1e-300), np.inf)
        active = np.flatnonzero(u)
        drop = active[np.argmin(ratios[active], )]
        u[drop] = 0
        theta, loss = numerics.solve_least_squares(X, y, expand_mask(u, components))
    return DesignSolution(u=u, theta=theta, train_loss=loss)


def _partition_sizes(n, k, rng):
    # Uniform proportions normalised to sum to n, every part >= 1.
    props = rng.random(k)
    sizes = np.maximum(1, np.floor(props / props.sum() * n).astype(int))
    while sizes.sum() > n:
        sizes[np.argmax(sizes)] -= 1
    while sizes.sum() < n:
        sizes[np.argmin(sizes)] += 1
    return sizes


def sd_generate_instance(n_features, samples, cost_percent, seed,
                         n_components=None, noise_scale=0.1):
    """Seeded random instance with a planted budget-feasible support."""
    if not (0 < cost_percent <= 1):
        raise ValueError("cost_percent must be in (0, 1]")
    if n_features < 1 or samples < 1:
        raise ValueError("n_features and samples must be >= 1")
    if n_features not in FEATURE_GRID:
        warnings.warn("n_features=%d is off the usual grid" % n_features)
    if samples not in SAMPLE_GRID:
        warnings.warn("samples=%d is off the usual grid" % samples)
    if cost_percent not in COST_GRID:
        warnings.warn("cost_percent=%.3g is off the usual grid" % cost_percent)
    rng = numerics.make_rng(seed)
    if n_components is None:
        n_components = int(rng.integers(4, 9))
    k = min(n_components, n_features)
    sizes = _partition_sizes(n_features, k, rng)
    weights = rng.uniform(1.0, 10.0, size=k)
    components = [Component(int(s), float(w)) for s, w in zip(sizes, weights)]
    bound = float(cost_percent * weights.sum())

    # Planted support: greedily admit components in random order while the
    # strict budget holds, so the ground truth is always feasible.
    order = rng.permutation(k)
    support = np.zeros(k, dtype=int)
    total = 0.0
    for i in order:
        if total + weights[i] < bound:
            support[i] = 1
            total += weights[i]
    theta_star = rng.standard_normal(n_features) * expand_mask(support, components)
    X = rng.standard_normal((samples, n_features))
    clean = X @ theta_star
    sigma = noise_scale * float(np.std(clean)) if noise_scale > 0 else 0.0
    y = clean + sigma * rng.standard_normal(samples)
    return SmartDesignInstance(
        X=X, y=y, components=components, bound=bound, noise_sigma=sigma, seed=seed
    )


def save_instance(instance, path):
    doc = {
        "problem": "smart-design",
        "seed": instance.seed,
        "components": [
            {"size": c.input_size, "weight": c.weight} for c in instance.components
        ],
        "B": instance.bound,
        "noise_sigma": instance.noise_sigma,
        "X": instance.X.tolist(),
        "y": instance.y.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_instance(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("problem") != "smart-design":
        raise ValueError("not a smart-design instance file")
    return SmartDesignInstance(
        X=np.array(doc["X"], dtype=float),
        y=np.array(doc["y"], dtype=float),
        components=[Component(int(c["size"]), float(c["weight"])) for c in doc["components"]],
        bound=float(doc["B"]),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        seed=int(doc.get("seed", 0)),
    )


def fold_split(n_samples, fold, seed, test_fraction=0.2):
    """Deterministic 80/20 split for the given fold index."""
    rng = numerics.make_rng(np.random.SeedSequence([seed & (2 ** 63 - 1), fold, 0x5D]))
    perm = rng.permutation(n_samples)
    n_test = max(1, int(round(test_fraction * n_samples)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def run_methods(instance, folds=5, stop=None, strategy="dfs", pruning="exact",
                trace=None, methods=("bagel", "l2_br", "l2_or")):
    """Solve every fold with each method; returns flat result rows."""
    rows = []
    weights = instance.weights
    for fold in range(folds):
        train_idx, test_idx = fold_split(len(instance.y), fold, instance.seed)
        Xtr, ytr = instance.X[train_idx], instance.y[train_idx]
        Xte, yte = instance.X[test_idx], instance.y[test_idx]
        for method in methods:
            nodes, wall_ms, completed = 0, 0.0, True
            if method == "bagel":
                problem = SmartDesignProblem(Xtr, ytr, instance.components, instance.bound)
                best, stats = bagel_search(
                    problem, stop=stop, strategy=strategy, pruning=pruning, trace=trace
                )
                if best is None:
                    continue
                sol = best.model
                nodes = stats.nodes_opened
                wall_ms = stats.wall_time * 1000.0
                completed = stats.completed
            elif method == "l2_br":
                sol = baseline_l2_br(Xtr, ytr, instance.components, instance.bound)
            elif method == "l2_or":
                sol = baseline_l2_or(Xtr, ytr, instance.components, instance.bound)
            else:
                raise ValueError("unknown method %r" % method)
            sol.test_loss = sd_evaluate(sol, Xte, yte)
            rows.append({
                "method": method,
                "fold": fold,
                "train_loss": sol.train_loss,
                "test_loss": sol.test_loss,
                "tightness": sd_tightness(sol.u, weights, instance.bound),
                "nodes": nodes,
                "wall_ms": wall_ms,
                "completed": completed,
            })
    return rows
