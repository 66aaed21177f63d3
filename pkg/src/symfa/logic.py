"""Propositional guard formulas over a fixed vocabulary.

Formulas are immutable ASTs (shareable across threads) over variables
identified by their position in a Vocabulary. Interpretations are total
truth assignments stored as bitmasks, so "the set {tired}" always means
every other variable is false.

The module also hosts the exhaustive model enumerator. It is exponential
on purpose: it is the correctness oracle the rest of the package is
tested against, not a production inference path.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

from .errors import (
    GuardSyntaxError,
    UndeclaredVariableError,
    VocabularyTooLargeError,
)

# Exhaustive enumeration walks 2^|V| interpretations; cap it well before
# that becomes an accidental denial of service.
MAX_ENUM_VARS = 24


@dataclass(frozen=True)
class Variable:
    """A named propositional variable at a fixed vocabulary position."""

    name: str
    index: int


@dataclass(frozen=True)
class Vocabulary:
    """Ordered, duplicate-free collection of variable names."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names in vocabulary: {self.names}")

    @classmethod
    def of(cls, *names: str) -> "Vocabulary":
        return cls(tuple(names))

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self) -> Iterator[Variable]:
        for i, name in enumerate(self.names):
            yield Variable(name, i)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.names


@dataclass(frozen=True)
class Interpretation:
    """Total truth assignment: bit i of `mask` is the value of variable i."""

    mask: int
    size: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.size:
            raise ValueError(f"mask {self.mask} out of range for {self.size} variables")

    @classmethod
    def from_true(cls, vocab: Vocabulary, names) -> "Interpretation":
        mask = 0
        for name in names:
            mask |= 1 << vocab.index(name)
        return cls(mask, len(vocab))

    def truth(self, index: int) -> bool:
        return bool(self.mask >> index & 1)

    def bits(self) -> tuple[bool, ...]:
        return tuple(self.truth(i) for i in range(self.size))

    def true_names(self, vocab: Vocabulary) -> tuple[str, ...]:
        return tuple(v.name for v in vocab if self.truth(v.index))

    def describe(self, vocab: Vocabulary) -> str:
        return "{" + ", ".join(self.true_names(vocab)) + "}"


def all_interpretations(size: int) -> Iterator[Interpretation]:
    """Yield every interpretation over `size` variables, mask-ascending."""
    if size > MAX_ENUM_VARS:
        raise VocabularyTooLargeError(
            f"refusing to enumerate 2^{size} interpretations (limit {MAX_ENUM_VARS} variables)"
        )
    for mask in range(1 << size):
        yield Interpretation(mask, size)


# --- formula AST -----------------------------------------------------------

class Formula:
    """Base class; concrete nodes below. All nodes are frozen and hashable."""

    __slots__ = ()


@dataclass(frozen=True)
class Var(Formula):
    index: int


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    children: tuple[Formula, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("And requires at least two children")


@dataclass(frozen=True)
class Or(Formula):
    children: tuple[Formula, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Or requires at least two children")


@dataclass(frozen=True)
class Const(Formula):
    value: bool


TRUE = Const(True)
FALSE = Const(False)


def f_not(f: Formula) -> Formula:
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Not):
        return f.child
    return Not(f)


def f_and(*fs: Formula) -> Formula:
    """N-ary conjunction with constant folding and associativity flattening."""
    flat: list[Formula] = []
    for f in fs:
        if isinstance(f, Const):
            if not f.value:
                return FALSE
            continue
        if isinstance(f, And):
            flat.extend(f.children)
        else:
            flat.append(f)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def f_or(*fs: Formula) -> Formula:
    """N-ary disjunction with constant folding and associativity flattening."""
    flat: list[Formula] = []
    for f in fs:
        if isinstance(f, Const):
            if f.value:
                return TRUE
            continue
        if isinstance(f, Or):
            flat.extend(f.children)
        else:
            flat.append(f)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def f_implies(a: Formula, b: Formula) -> Formula:
    return f_or(f_not(a), b)


def evaluate(f: Formula, omega: Interpretation) -> bool:
    """Standard boolean semantics of `f` under the total assignment `omega`."""
    if isinstance(f, Var):
        if f.index >= omega.size:
            raise ValueError(
                f"variable index {f.index} out of range for interpretation of size {omega.size}"
            )
        return omega.truth(f.index)
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Not):
        return not evaluate(f.child, omega)
    if isinstance(f, And):
        return all(evaluate(c, omega) for c in f.children)
    if isinstance(f, Or):
        return any(evaluate(c, omega) for c in f.children)
    raise TypeError(f"not a formula node: {f!r}")


def support(f: Formula) -> frozenset[int]:
    """Indices of variables that occur in `f`."""
    if isinstance(f, Var):
        return frozenset((f.index,))
    if isinstance(f, Const):
        return frozenset()
    if isinstance(f, Not):
        return support(f.child)
    acc: frozenset[int] = frozenset()
    for c in f.children:
        acc |= support(c)
    return acc


def restrict(f: Formula, index: int, value: bool) -> Formula:
    """Substitute a constant for variable `index` and simplify."""
    if isinstance(f, Var):
        return (TRUE if value else FALSE) if f.index == index else f
    if isinstance(f, Const):
        return f
    if isinstance(f, Not):
        return f_not(restrict(f.child, index, value))
    if isinstance(f, And):
        return f_and(*(restrict(c, index, value) for c in f.children))
    return f_or(*(restrict(c, index, value) for c in f.children))


def enumerate_models(f: Formula, vocab_size: int) -> set[Interpretation]:
    """All interpretations satisfying `f`, over the full vocabulary.

    Exponential in vocab_size; guarded at MAX_ENUM_VARS variables. This is
    the brute-force oracle behind satisfiability witnesses and tests.
    """
    return {w for w in all_interpretations(vocab_size) if evaluate(f, w)}


# --- concrete syntax -------------------------------------------------------
#
# expr := impl
# impl := or ("->" or)?
# or   := and ("|" and)*
# and  := not ("&" not)*
# not  := "!" not | atom
# atom := ident | "true" | "false" | "(" expr ")"
#
# Precedence: ! > & > | > ->, with "a -> b" read as "!a | b".

_TOKEN_RE = re.compile(r"\s*(->|[()!&|]|[A-Za-z_][A-Za-z0-9_]*)")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise GuardSyntaxError(f"unexpected character {text[bad]!r}", bad)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, vocab: Vocabulary):
        self.text = text
        self.vocab = vocab
        self.tokens = _tokenize(text)
        self.at = 0

    def peek(self) -> str | None:
        return self.tokens[self.at][0] if self.at < len(self.tokens) else None

    def pos(self) -> int:
        return self.tokens[self.at][1] if self.at < len(self.tokens) else len(self.text)

    def take(self) -> tuple[str, int]:
        tok = self.tokens[self.at]
        self.at += 1
        return tok

    def expect(self, want: str):
        if self.peek() != want:
            raise GuardSyntaxError(f"expected {want!r}", self.pos())
        self.take()

    def parse(self) -> Formula:
        f = self.impl()
        if self.at < len(self.tokens):
            raise GuardSyntaxError(f"unexpected token {self.peek()!r}", self.pos())
        return f

    def impl(self) -> Formula:
        left = self.disjunction()
        if self.peek() == "->":
            self.take()
            return f_implies(left, self.disjunction())
        return left

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek() == "|":
            self.take()
            parts.append(self.conjunction())
        return f_or(*parts) if len(parts) > 1 else parts[0]

    def conjunction(self) -> Formula:
        parts = [self.negation()]
        while self.peek() == "&":
            self.take()
            parts.append(self.negation())
        return f_and(*parts) if len(parts) > 1 else parts[0]

    def negation(self) -> Formula:
        if self.peek() == "!":
            self.take()
            return f_not(self.negation())
        return self.atom()

    def atom(self) -> Formula:
        tok = self.peek()
        pos = self.pos()
        if tok is None:
            raise GuardSyntaxError("unexpected end of expression", pos)
        if tok == "(":
            self.take()
            inner = self.impl()
            self.expect(")")
            return inner
        if tok in ("true", "false"):
            self.take()
            return TRUE if tok == "true" else FALSE
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            self.take()
            if tok not in self.vocab:
                raise UndeclaredVariableError(tok, pos)
            return Var(self.vocab.index(tok))
        raise GuardSyntaxError(f"unexpected token {tok!r}", pos)


def parse_formula(text: str, vocab: Vocabulary) -> Formula:
    """Parse a guard expression; raises GuardSyntaxError / UndeclaredVariableError."""
    return _Parser(text, vocab).parse()


def format_formula(f: Formula, vocab: Vocabulary) -> str:
    """Render `f` in the concrete syntax; parse(format(f)) == f structurally."""

    def render(g: Formula, parent: str) -> str:
        if isinstance(g, Const):
            return "true" if g.value else "false"
        if isinstance(g, Var):
            return vocab.names[g.index]
        if isinstance(g, Not):
            return "!" + render(g.child, "not")
        if isinstance(g, And):
            body = " & ".join(render(c, "and") for c in g.children)
            return f"({body})" if parent in ("not",) else body
        body = " | ".join(render(c, "or") for c in g.children)
        return f"({body})" if parent in ("not", "and") else body

    return render(f, "top")
