"""Symbolic automata: representation, validation, and probabilistic runs.

An automaton carries a propositional guard on each transition. After
validation (guards out of each state pairwise disjoint and jointly
exhaustive) the per-observation transition matrix is row-stochastic, and
the state distribution after each observation follows the recursion

    alpha_0 = one-hot at the initial state
    alpha_{t+1} = alpha_t @ T(p_{t+1}),   T[i, j] = P(guard(i, j) | p)

Acceptance probability is the final alpha mass on accepting states, which
equals the probability-weighted sum over all accepted boolean traces.
Compiled automata are immutable; forward runs and gradients are pure
functions and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import circuit
from .circuit import CompiledGuard, compile_guard, wmc_batch
from .errors import (
    ConsistencyError,
    IncompleteError,
    NonDeterministicError,
    SfaFileError,
)
from .logic import (
    FALSE,
    Formula,
    Interpretation,
    Vocabulary,
    evaluate,
    f_and,
    f_not,
    f_or,
    format_formula,
    parse_formula,
    support,
)

ROW_SUM_RUNTIME_TOL = 1e-6


@dataclass(frozen=True)
class Sfa:
    """Raw symbolic automaton, prior to validation.

    `transitions` is sparse: an absent (source, target) pair means the
    guard `false`. State references are indices into `states`.
    """

    vocab: Vocabulary
    states: tuple[str, ...]
    initial: int
    transitions: Mapping[tuple[int, int], Formula]
    accepting: frozenset[int]

    def __post_init__(self):
        n = len(self.states)
        if len(set(self.states)) != n:
            raise ValueError(f"duplicate state names: {self.states}")
        if not 0 <= self.initial < n:
            raise ValueError(f"initial state index {self.initial} out of range")
        if any(not 0 <= q < n for q in self.accepting):
            raise ValueError("accepting state index out of range")
        for src, dst in self.transitions:
            if not (0 <= src < n and 0 <= dst < n):
                raise ValueError(f"transition ({src}, {dst}) references unknown state")

    @property
    def num_states(self) -> int:
        return len(self.states)

    def state_index(self, name: str) -> int:
        return self.states.index(name)


@dataclass(frozen=True)
class CompiledSfa:
    """Validated automaton with one compiled circuit per transition.

    Only produced by validate_and_compile, so holders may assume the
    determinism and exhaustiveness invariants; `completed_states` lists
    states whose implicit self-loop was synthesized during validation.
    """

    sfa: Sfa
    guards: Mapping[tuple[int, int], CompiledGuard]
    completed_states: tuple[str, ...]
    validated: bool = True

    @property
    def vocab(self) -> Vocabulary:
        return self.sfa.vocab

    @property
    def states(self) -> tuple[str, ...]:
        return self.sfa.states

    @property
    def num_states(self) -> int:
        return self.sfa.num_states

    @property
    def accepting(self) -> frozenset[int]:
        return self.sfa.accepting


def _find_assignment(f: Formula, vocab_size: int, value: bool) -> Interpretation | None:
    """Search assignments of f's support (others false) for one where f == value."""
    sup = sorted(support(f))
    for bits in range(1 << len(sup)):
        mask = 0
        for k, var in enumerate(sup):
            if bits >> k & 1:
                mask |= 1 << var
        omega = Interpretation(mask, vocab_size)
        if evaluate(f, omega) == value:
            return omega
    return None


def complete_self_loops(sfa: Sfa) -> tuple[Sfa, tuple[str, ...]]:
    """Route unmatched interpretations into a self-loop, per state.

    For every state whose declared outgoing guards do not cover all
    interpretations, the uncovered remainder is added to (or becomes) the
    state's self-loop guard. Returns the completed automaton and the names
    of the states that were changed.
    """
    transitions = dict(sfa.transitions)
    changed = []
    n = len(sfa.vocab)
    for q in range(sfa.num_states):
        outgoing = [f for (src, _), f in transitions.items() if src == q]
        disj = f_or(*outgoing) if outgoing else FALSE
        gap_witness = _find_assignment(disj, n, False)
        if gap_witness is None:
            continue
        gap = f_not(disj)
        existing = transitions.get((q, q))
        transitions[(q, q)] = f_or(existing, gap) if existing is not None else gap
        changed.append(sfa.states[q])
    completed = Sfa(sfa.vocab, sfa.states, sfa.initial, transitions, sfa.accepting)
    return completed, tuple(changed)


def validate_and_compile(
    sfa: Sfa,
    complete: bool = True,
    max_nodes: int = circuit.DEFAULT_MAX_NODES,
) -> CompiledSfa:
    """Check determinism and exhaustiveness, compile every guard.

    Guards out of each state must be pairwise unsatisfiable in conjunction
    and their disjunction valid; both facts are established by model
    counting on compiled circuits, with counterexample interpretations
    recovered by enumeration over the offending guards' support. With
    `complete` (the default) missing coverage becomes a self-loop first;
    without it, uncovered states raise IncompleteError.
    """
    n = len(sfa.vocab)
    completed_states: tuple[str, ...] = ()
    if complete:
        sfa, completed_states = complete_self_loops(sfa)

    guards = {
        pair: compile_guard(f, n, max_nodes=max_nodes)
        for pair, f in sfa.transitions.items()
    }

    for q in range(sfa.num_states):
        out = sorted(
            (dst, f) for (src, dst), f in sfa.transitions.items() if src == q
        )
        for a in range(len(out)):
            for b in range(a + 1, len(out)):
                both = f_and(out[a][1], out[b][1])
                if circuit.is_satisfiable(compile_guard(both, n, max_nodes=max_nodes)):
                    witness = _find_assignment(both, n, True)
                    raise NonDeterministicError(
                        sfa.states[q],
                        (sfa.states[out[a][0]], sfa.states[out[b][0]]),
                        witness.describe(sfa.vocab),
                    )
        disj = f_or(*(f for _, f in out)) if out else FALSE
        if not circuit.is_valid(compile_guard(disj, n, max_nodes=max_nodes)):
            witness = _find_assignment(disj, n, False)
            raise IncompleteError(sfa.states[q], witness.describe(sfa.vocab))

    return CompiledSfa(sfa, guards, completed_states)


# --- probabilistic runs ----------------------------------------------------

def _check_probs(c: CompiledSfa, ps: np.ndarray, min_dims: int) -> np.ndarray:
    ps = np.asarray(ps, dtype=np.float64)
    if ps.ndim < min_dims or ps.shape[-1] != len(c.vocab):
        raise ValueError(
            f"expected probability array (..., steps, {len(c.vocab)}), got shape {ps.shape}"
        )
    return ps


def transition_tensor(c: CompiledSfa, ps, want_gradient: bool = False):
    """Stack of transition matrices for probability rows ps (..., num_vars).

    Returns (..., Q, Q) matrices, plus (..., Q, Q, num_vars) gradients when
    requested. Row sums are checked against the runtime tolerance.
    """
    ps = _check_probs(c, ps, 1)
    nq = c.num_states
    mats = np.zeros(ps.shape[:-1] + (nq, nq))
    grads = np.zeros(ps.shape[:-1] + (nq, nq, ps.shape[-1])) if want_gradient else None
    for (i, j), g in c.guards.items():
        value, grad = wmc_batch(g, ps, want_gradient)
        mats[..., i, j] = value
        if want_gradient:
            grads[..., i, j, :] = grad
    rows = mats.sum(axis=-1)
    worst = float(np.abs(rows - 1.0).max()) if rows.size else 0.0
    if worst > ROW_SUM_RUNTIME_TOL:
        raise ConsistencyError(
            f"transition-matrix row sums off by {worst:.3e}; automaton was not validated correctly"
        )
    return (mats, grads) if want_gradient else mats


def transition_matrix(c: CompiledSfa, p, want_gradient: bool = False):
    """Single transition matrix T with T[i, j] = P(guard(i, j) | p)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("transition_matrix expects one probability vector")
    return transition_tensor(c, p, want_gradient)


def _initial_alpha(c: CompiledSfa, lead_shape: tuple) -> np.ndarray:
    alpha = np.zeros(lead_shape + (c.num_states,))
    alpha[..., c.sfa.initial] = 1.0
    return alpha


def forward_alphas(c: CompiledSfa, ps) -> np.ndarray:
    """State distributions after each step, batched: (..., T, V) -> (..., T, Q)."""
    ps = _check_probs(c, ps, 2)
    steps = ps.shape[-2]
    mats = transition_tensor(c, ps)
    alpha = _initial_alpha(c, ps.shape[:-2])
    out = np.zeros(ps.shape[:-2] + (steps, c.num_states))
    for t in range(steps):
        alpha = np.einsum("...i,...ij->...j", alpha, mats[..., t, :, :])
        out[..., t, :] = alpha
    return out


def forward(c: CompiledSfa, ps) -> list[np.ndarray]:
    """State distribution after each observation of one sequence.

    `ps` is a (T, num_vars) array (or list of rows); the result is the list
    (alpha_1, ..., alpha_T). An empty sequence yields an empty list.
    """
    ps = np.asarray(ps, dtype=np.float64)
    if ps.size == 0:
        return []
    if ps.ndim != 2:
        raise ValueError("forward expects a (steps, num_vars) array")
    alphas = forward_alphas(c, ps)
    return [alphas[t] for t in range(alphas.shape[0])]


def _accepting_mask(c: CompiledSfa) -> np.ndarray:
    mask = np.zeros(c.num_states)
    for q in c.accepting:
        mask[q] = 1.0
    return mask


def acceptance(c: CompiledSfa, ps) -> float:
    """Probability that the automaton accepts the probability sequence."""
    ps = np.asarray(ps, dtype=np.float64)
    if ps.size == 0:
        return 1.0 if c.sfa.initial in c.accepting else 0.0
    alphas = forward(c, ps)
    return float(alphas[-1] @ _accepting_mask(c))


def acceptance_batch(c: CompiledSfa, ps) -> np.ndarray:
    """Acceptance probabilities for a batch of equal-length sequences."""
    ps = _check_probs(c, ps, 2)
    if ps.shape[-2] == 0:
        value = 1.0 if c.sfa.initial in c.accepting else 0.0
        return np.full(ps.shape[:-2], value)
    alphas = forward_alphas(c, ps)
    return alphas[..., -1, :] @ _accepting_mask(c)


def backward_gradient(c: CompiledSfa, ps, alpha_grads) -> np.ndarray:
    """Exact reverse-mode gradient of a loss through the state recursion.

    `ps` has shape (..., T, V); `alpha_grads` has shape (..., T, Q) and
    holds dLoss/dalpha_t for each step's distribution (zeros where the
    loss does not read a step). The result is dLoss/dps, same shape as ps.
    """
    ps = _check_probs(c, ps, 2)
    alpha_grads = np.asarray(alpha_grads, dtype=np.float64)
    steps = ps.shape[-2]
    if alpha_grads.shape != ps.shape[:-1] + (c.num_states,):
        raise ValueError(
            f"alpha_grads shape {alpha_grads.shape} does not match sequence shape"
        )
    if steps == 0:
        return np.zeros(ps.shape)

    guard_vals = {}
    guard_grads = {}
    for pair, g in c.guards.items():
        guard_vals[pair], guard_grads[pair] = wmc_batch(g, ps, want_gradient=True)

    nq = c.num_states
    mats = np.zeros(ps.shape[:-1] + (nq, nq))
    for (i, j), vals in guard_vals.items():
        mats[..., i, j] = vals

    # replay the forward pass to have every alpha_t at hand
    alpha = _initial_alpha(c, ps.shape[:-2])
    prev = [alpha]
    for t in range(steps):
        alpha = np.einsum("...i,...ij->...j", alpha, mats[..., t, :, :])
        prev.append(alpha)

    out = np.zeros(ps.shape)
    abar = np.zeros(ps.shape[:-2] + (nq,))
    for t in range(steps - 1, -1, -1):
        abar = abar + alpha_grads[..., t, :]
        alpha_before = prev[t]
        for (i, j), ggrad in guard_grads.items():
            weight = alpha_before[..., i] * abar[..., j]
            out[..., t, :] += weight[..., None] * ggrad[..., t, :]
        abar = np.einsum("...ij,...j->...i", mats[..., t, :, :], abar)
    return out


def forward_backward_grad(c: CompiledSfa, ps, loss_grad_on_alphas) -> list[np.ndarray]:
    """Per-step gradients dLoss/dp_t given upstream dLoss/dalpha_t vectors.

    `loss_grad_on_alphas` is one vector of length Q per step; entries for
    steps the loss ignores may be given as None.
    """
    ps = np.asarray(ps, dtype=np.float64)
    if ps.size == 0:
        return []
    if ps.ndim != 2:
        raise ValueError("forward_backward_grad expects a (steps, num_vars) array")
    steps = ps.shape[0]
    if len(loss_grad_on_alphas) != steps:
        raise ValueError("need one upstream gradient (or None) per step")
    grads = np.zeros((steps, c.num_states))
    for t, g in enumerate(loss_grad_on_alphas):
        if g is not None:
            g = np.asarray(g, dtype=np.float64)
            if g.shape != (c.num_states,):
                raise ValueError(f"upstream gradient {t} has shape {g.shape}")
            grads[t] = g
    full = backward_gradient(c, ps, grads)
    return [full[t] for t in range(steps)]


# --- boolean runs ----------------------------------------------------------

def boolean_run(c: CompiledSfa, trace: Sequence[Interpretation]) -> list[int]:
    """State indices visited after each interpretation of a boolean trace."""
    state = c.sfa.initial
    path = []
    for omega in trace:
        nxt = None
        for (src, dst), f in c.sfa.transitions.items():
            if src == state and evaluate(f, omega):
                nxt = dst
                break
        if nxt is None:  # unreachable on a validated automaton
            raise ConsistencyError(
                f"no transition out of '{c.states[state]}' fires on {omega.describe(c.vocab)}"
            )
        state = nxt
        path.append(state)
    return path


def accepts_trace(c: CompiledSfa, trace: Sequence[Interpretation]) -> bool:
    """Boolean acceptance of a trace of interpretations."""
    path = boolean_run(c, trace)
    final = path[-1] if path else c.sfa.initial
    return final in c.accepting


# --- automaton description files -------------------------------------------
#
# vars: tired, blocked, fast      # ordered vocabulary
# states: q0, q1, q2              # ordered state names
# initial: q0
# accepting: q0, q1               # may be empty
# q0 -> q1 : tired | blocked      # one line per declared transition
#
# '#' starts a comment anywhere on a line; blank lines are ignored; the
# four header lines must each appear exactly once, before any use is made
# of them; transition lines may repeat (src, dst) pairs at most once.

def parse_sfa(text: str) -> Sfa:
    vocab: Vocabulary | None = None
    states: tuple[str, ...] | None = None
    initial: int | None = None
    accepting: frozenset[int] | None = None
    transitions: dict[tuple[int, int], Formula] = {}

    def split_names(body: str) -> list[str]:
        return [part.strip() for part in body.split(",") if part.strip()]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" in line:
            if vocab is None or states is None:
                raise SfaFileError("transition listed before vars/states headers", lineno)
            head, _, guard_text = line.partition(":")
            if not guard_text.strip():
                raise SfaFileError("transition needs ': <guard>'", lineno)
            src_name, _, dst_name = head.partition("->")
            src_name, dst_name = src_name.strip(), dst_name.strip()
            try:
                src, dst = states.index(src_name), states.index(dst_name)
            except ValueError:
                missing = src_name if src_name not in states else dst_name
                raise SfaFileError(f"unknown state '{missing}'", lineno) from None
            if (src, dst) in transitions:
                raise SfaFileError(
                    f"duplicate transition {src_name} -> {dst_name}", lineno
                )
            try:
                transitions[(src, dst)] = parse_formula(guard_text.strip(), vocab)
            except Exception as exc:
                raise SfaFileError(f"bad guard: {exc}", lineno) from exc
            continue
        key, sep, body = line.partition(":")
        key = key.strip().lower()
        if not sep or key not in ("vars", "states", "initial", "accepting"):
            raise SfaFileError(f"unrecognized line {line!r}", lineno)
        if key == "vars":
            if vocab is not None:
                raise SfaFileError("duplicate vars header", lineno)
            names = split_names(body)
            if not names:
                raise SfaFileError("vars header needs at least one name", lineno)
            vocab = Vocabulary(tuple(names))
        elif key == "states":
            if states is not None:
                raise SfaFileError("duplicate states header", lineno)
            names = split_names(body)
            if not names:
                raise SfaFileError("states header needs at least one name", lineno)
            states = tuple(names)
        elif key == "initial":
            if initial is not None:
                raise SfaFileError("duplicate initial header", lineno)
            if states is None:
                raise SfaFileError("initial header must follow states", lineno)
            name = body.strip()
            if name not in states:
                raise SfaFileError(f"unknown initial state '{name}'", lineno)
            initial = states.index(name)
        else:
            if accepting is not None:
                raise SfaFileError("duplicate accepting header", lineno)
            if states is None:
                raise SfaFileError("accepting header must follow states", lineno)
            acc = []
            for name in split_names(body):
                if name not in states:
                    raise SfaFileError(f"unknown accepting state '{name}'", lineno)
                acc.append(states.index(name))
            accepting = frozenset(acc)

    for missing, value in (
        ("vars", vocab),
        ("states", states),
        ("initial", initial),
        ("accepting", accepting),
    ):
        if value is None:
            raise SfaFileError(f"missing {missing} header", 0)
    return Sfa(vocab, states, initial, transitions, accepting)


def load_sfa(path) -> Sfa:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sfa(fh.read())


def format_sfa(sfa: Sfa) -> str:
    lines = [
        "vars: " + ", ".join(sfa.vocab.names),
        "states: " + ", ".join(sfa.states),
        "initial: " + sfa.states[sfa.initial],
        "accepting: " + ", ".join(sfa.states[q] for q in sorted(sfa.accepting)),
    ]
    for (src, dst) in sorted(sfa.transitions):
        guard = format_formula(sfa.transitions[(src, dst)], sfa.vocab)
        lines.append(f"{sfa.states[src]} -> {sfa.states[dst]} : {guard}")
    return "\n".join(lines) + "\n"
