"""Guard compilation to tractable arithmetic circuits.

A guard formula is compiled once, by Shannon expansion along a variable
order with memoization on the residual subformula, into a circuit whose
sum nodes are deterministic (children have disjoint models) and whose
product nodes are decomposable (children mention disjoint variables).
On that form the probability of the guard under independent per-variable
probabilities is a single bottom-up pass, and its gradient a single
top-down pass, both linear in circuit size.

Circuits are immutable after compilation; evaluation allocates only local
buffers and is safe to run concurrently from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CircuitSizeError
from .logic import Const, Formula, restrict, support

DEFAULT_MAX_NODES = 1_000_000

# Node encodings: ("const", 0|1) | ("leaf", var, positive) |
# ("sum", children) | ("prod", children). Children always precede parents
# in the node array, so array order is a topological order.
KIND_CONST = "const"
KIND_LEAF = "leaf"
KIND_SUM = "sum"
KIND_PROD = "prod"


@dataclass(frozen=True)
class CompiledGuard:
    """Deterministic, decomposable arithmetic circuit for one guard."""

    nodes: tuple[tuple, ...]
    root: int
    num_vars: int

    def __len__(self) -> int:
        return len(self.nodes)

    def dump(self) -> str:
        """One node per line, `<id> <kind> <args...>`, topologically sorted.

        Only nodes reachable from the root are emitted, renumbered in a
        deterministic post-order; the last line is always the root.
        """
        order: list[int] = []
        marks = set()

        def visit(i: int):
            if i in marks:
                return
            marks.add(i)
            node = self.nodes[i]
            if node[0] in (KIND_SUM, KIND_PROD):
                for c in node[1]:
                    visit(c)
            order.append(i)

        visit(self.root)
        renum = {old: new for new, old in enumerate(order)}
        lines = []
        for old in order:
            node = self.nodes[old]
            if node[0] == KIND_CONST:
                lines.append(f"{renum[old]} const {node[1]}")
            elif node[0] == KIND_LEAF:
                sign = "+" if node[2] else "-"
                lines.append(f"{renum[old]} leaf {node[1]} {sign}")
            else:
                args = " ".join(str(renum[c]) for c in node[1])
                lines.append(f"{renum[old]} {node[0]} {args}")
        return "\n".join(lines)


@dataclass
class WmcResult:
    """Probability of the guard and, on request, its gradient w.r.t. p."""

    value: float
    gradient: np.ndarray | None = None


class _Builder:
    """Hash-consing circuit builder with a node budget."""

    def __init__(self, num_vars: int, max_nodes: int):
        self.num_vars = num_vars
        self.max_nodes = max_nodes
        self.nodes: list[tuple] = []
        self.unique: dict[tuple, int] = {}

    def intern(self, node: tuple) -> int:
        found = self.unique.get(node)
        if found is not None:
            return found
        if len(self.nodes) >= self.max_nodes:
            raise CircuitSizeError(
                f"circuit exceeds the {self.max_nodes}-node budget"
            )
        self.nodes.append(node)
        self.unique[node] = len(self.nodes) - 1
        return len(self.nodes) - 1

    def const(self, value: int) -> int:
        return self.intern((KIND_CONST, value))

    def leaf(self, var: int, positive: bool) -> int:
        return self.intern((KIND_LEAF, var, positive))

    def is_const(self, i: int, value: int) -> bool:
        node = self.nodes[i]
        return node[0] == KIND_CONST and node[1] == value

    def product(self, a: int, b: int) -> int:
        if self.is_const(a, 0) or self.is_const(b, 0):
            return self.const(0)
        if self.is_const(a, 1):
            return b
        if self.is_const(b, 1):
            return a
        return self.intern((KIND_PROD, (a, b)))

    def sum(self, a: int, b: int) -> int:
        if self.is_const(a, 0):
            return b
        if self.is_const(b, 0):
            return a
        return self.intern((KIND_SUM, (a, b)))

    def decision(self, var: int, hi: int, lo: int) -> int:
        # p*x + (1-p)*x == x, so equal branches collapse without touching
        # the weighted count.
        if hi == lo:
            return hi
        if self.is_const(hi, 1) and self.is_const(lo, 0):
            return self.leaf(var, True)
        if self.is_const(hi, 0) and self.is_const(lo, 1):
            return self.leaf(var, False)
        return self.sum(
            self.product(self.leaf(var, True), hi),
            self.product(self.leaf(var, False), lo),
        )


def compile_guard(
    f: Formula,
    num_vars: int,
    order: list[int] | None = None,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> CompiledGuard:
    """Compile `f` (over `num_vars` variables) by ordered Shannon expansion.

    `order` defaults to vocabulary declaration order. Raises
    CircuitSizeError if the node budget is exceeded.
    """
    if order is None:
        order = list(range(num_vars))
    else:
        order = list(order)
        if sorted(order) != list(range(num_vars)):
            raise ValueError(f"order must be a permutation of 0..{num_vars - 1}")

    builder = _Builder(num_vars, max_nodes)
    memo: dict[tuple[int, Formula], int] = {}

    def shannon(depth: int, g: Formula) -> int:
        if isinstance(g, Const):
            return builder.const(1 if g.value else 0)
        key = (depth, g)
        found = memo.get(key)
        if found is not None:
            return found
        var = order[depth]
        if var not in support(g):
            out = shannon(depth + 1, g)
        else:
            hi = shannon(depth + 1, restrict(g, var, True))
            lo = shannon(depth + 1, restrict(g, var, False))
            out = builder.decision(var, hi, lo)
        memo[key] = out
        return out

    root = shannon(0, f)
    return CompiledGuard(tuple(builder.nodes), root, num_vars)


def _values(g: CompiledGuard, p: np.ndarray) -> list:
    """Bottom-up node values for p of shape (..., num_vars)."""
    out: list = [None] * len(g.nodes)
    for i, node in enumerate(g.nodes):
        kind = node[0]
        if kind == KIND_LEAF:
            out[i] = p[..., node[1]] if node[2] else 1.0 - p[..., node[1]]
        elif kind == KIND_CONST:
            out[i] = np.broadcast_to(np.float64(node[1]), p.shape[:-1])
        else:
            acc = out[node[1][0]]
            for c in node[1][1:]:
                acc = acc + out[c] if kind == KIND_SUM else acc * out[c]
            out[i] = acc
    return out


def _gradient(g: CompiledGuard, p: np.ndarray, vals: list) -> np.ndarray:
    """Top-down adjoint pass; returns dvalue/dp with p's shape."""
    base = p.shape[:-1]
    adj: list = [None] * len(g.nodes)
    adj[g.root] = np.ones(base)
    grad = np.zeros(p.shape)
    for i in range(len(g.nodes) - 1, -1, -1):
        a = adj[i]
        if a is None:
            continue
        node = g.nodes[i]
        kind = node[0]
        if kind == KIND_LEAF:
            if node[2]:
                grad[..., node[1]] += a
            else:
                grad[..., node[1]] -= a
        elif kind == KIND_SUM:
            for c in node[1]:
                adj[c] = a if adj[c] is None else adj[c] + a
        elif kind == KIND_PROD:
            cs = node[1]
            # prefix/suffix products keep the pass exact when child values
            # are zero (plain division would not)
            prefix = [np.ones(base)]
            for c in cs[:-1]:
                prefix.append(prefix[-1] * vals[c])
            suffix = np.ones(base)
            for k in range(len(cs) - 1, -1, -1):
                contrib = a * prefix[k] * suffix
                c = cs[k]
                adj[c] = contrib if adj[c] is None else adj[c] + contrib
                suffix = suffix * vals[c]
    return grad


def wmc_batch(g: CompiledGuard, p: np.ndarray, want_gradient: bool = False):
    """Weighted model count for a batch of probability vectors.

    p has shape (..., num_vars); the value has shape (...,) and the
    gradient, when requested, p's shape.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != g.num_vars:
        raise ValueError(
            f"probability vector has {p.shape[-1]} entries, circuit expects {g.num_vars}"
        )
    vals = _values(g, p)
    value = np.asarray(vals[g.root], dtype=np.float64)
    if not want_gradient:
        return value, None
    return value, _gradient(g, p, vals)


def wmc(g: CompiledGuard, p, want_gradient: bool = False) -> WmcResult:
    """Probability of the compiled guard under per-variable probabilities p."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("wmc expects a single probability vector; see wmc_batch")
    value, grad = wmc_batch(g, p, want_gradient)
    return WmcResult(float(value), grad)


def is_satisfiable(g: CompiledGuard) -> bool:
    """True iff the guard has at least one model.

    At p = 1/2 every node value is a dyadic rational, so the weighted count
    equals model_count / 2^n exactly and the zero test needs no tolerance.
    """
    value, _ = wmc_batch(g, np.full(g.num_vars, 0.5))
    return float(value) > 0.0


def is_valid(g: CompiledGuard) -> bool:
    """True iff every interpretation is a model (count == 2^n, exactly)."""
    value, _ = wmc_batch(g, np.full(g.num_vars, 0.5))
    return float(value) == 1.0
