"""Synthetic benchmark: data generation, baseline engine, timing, metrics.

The generator renders boolean traces, sampled uniformly among the traces
a pattern accepts (or rejects), into noisy feature vectors: two coordinates
per symbol with prototypes +1/-1 for true and -1/+1 for false, plus
Gaussian noise. Labels are therefore exact by construction.

The enumerative engine is the reference competitor for the compiled path:
it propositionalizes every guard into its explicit model set and walks
plain Python floats, which is the cost any system pays when it grounds
the temporal pattern instead of compiling it.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .automaton import (
    CompiledSfa,
    Sfa,
    acceptance_batch,
    complete_self_loops,
    parse_sfa,
    validate_and_compile,
)
from .errors import UnsatisfiablePatternError, VocabularyTooLargeError
from .learn import LabeledSequence, _sigmoid
from .logic import (
    Formula,
    Var,
    Vocabulary,
    enumerate_models,
    f_and,
    f_not,
    f_or,
)

ENUMERATIVE_MAX_VARS = 12
DEFAULT_NOISE = 0.3
REFERENCE_SCALE = 2.0


@dataclass(frozen=True)
class PatternSpec:
    """A named automaton plus its size metadata, validated on construction."""

    name: str
    sfa: Sfa
    compiled: CompiledSfa = field(compare=False, repr=False, default=None)

    def __post_init__(self):
        if self.compiled is None:
            object.__setattr__(self, "compiled", validate_and_compile(self.sfa))

    @property
    def num_states(self) -> int:
        return self.sfa.num_states

    @property
    def num_symbols(self) -> int:
        return len(self.sfa.vocab)


def _bundled(name: str) -> Sfa:
    text = resources.files("symfa").joinpath(f"specs/{name}.sfa").read_text("utf-8")
    return parse_sfa(text)


def driving_pattern() -> PatternSpec:
    """The bundled three-state / three-symbol driving-safety pattern."""
    return PatternSpec("driving", _bundled("driving"))


def events_pattern() -> PatternSpec:
    """The bundled three-state event-tagging pattern (partial guards,
    completed by the self-loop rule)."""
    return PatternSpec("events", _bundled("events"))


def _random_literal(rng: random.Random, num_vars: int) -> Formula:
    v = Var(rng.randrange(num_vars))
    return v if rng.random() < 0.5 else f_not(v)


def _random_clause(rng: random.Random, num_vars: int) -> Formula:
    k = rng.randint(1, min(3, num_vars))
    lits = [_random_literal(rng, num_vars) for _ in range(k)]
    if len(lits) == 1:
        return lits[0]
    return f_and(*lits) if rng.random() < 0.5 else f_or(*lits)


def random_pattern(num_states: int, num_symbols: int, seed: int) -> PatternSpec:
    """Seeded random pattern, deterministic by construction.

    Each state's outgoing transitions form a decision list: branch i fires
    when its test holds and no earlier test did, and the final branch is
    the catch-all, so the guards partition the interpretations without any
    completion. Retries the accepting-set draw until it is a proper,
    nonempty subset.
    """
    if num_states < 2:
        raise ValueError("random patterns need at least two states")
    rng = random.Random(seed)
    vocab = Vocabulary(tuple(f"s{i}" for i in range(num_symbols)))
    states = tuple(f"q{i}" for i in range(num_states))
    transitions = {}
    for q in range(num_states):
        n_branches = rng.randint(2, min(3, num_states))
        targets = rng.sample(range(num_states), n_branches)
        seen: list[Formula] = []
        merged: dict[int, Formula] = {}
        for b, target in enumerate(targets):
            if b == len(targets) - 1:
                guard = f_and(*(f_not(t) for t in seen))
            else:
                test = _random_clause(rng, num_symbols)
                guard = f_and(*([f_not(t) for t in seen] + [test]))
                seen.append(test)
            prev = merged.get(target)
            merged[target] = guard if prev is None else f_or(prev, guard)
        for target, guard in merged.items():
            transitions[(q, target)] = guard
    while True:
        accepting = frozenset(
            q for q in range(num_states) if rng.random() < 0.5
        )
        if accepting and len(accepting) < num_states:
            break
    sfa = Sfa(vocab, states, 0, transitions, accepting)
    return PatternSpec(f"random-{num_states}x{num_symbols}-{seed}", sfa)


# --- dataset generation -----------------------------------------------------

@dataclass
class GeneratedSequence:
    features: np.ndarray  # (steps, 2 * num_symbols)
    label: int
    clean_trace: np.ndarray  # (steps, num_symbols) booleans


@dataclass
class SyntheticDataset:
    sequences: list[GeneratedSequence]
    pattern: str
    length: int
    noise: float
    seed: int

    def labeled(self) -> list[LabeledSequence]:
        return [LabeledSequence(s.features, label=s.label) for s in self.sequences]


def _transition_models(c: CompiledSfa) -> dict[tuple[int, int], list[int]]:
    """Model masks per transition of the completed automaton."""
    n = len(c.vocab)
    return {
        pair: sorted(w.mask for w in enumerate_models(f, n))
        for pair, f in c.sfa.transitions.items()
    }


def _suffix_counts(c, models, length: int, accept: bool) -> list[list[int]]:
    """counts[t][q] = number of trace suffixes of length-t steps remaining
    that end in an accepting (or rejecting) state, exact integers."""
    nq = c.num_states
    counts = [[0] * nq for _ in range(length + 1)]
    for q in range(nq):
        counts[length][q] = 1 if (q in c.accepting) == accept else 0
    for t in range(length - 1, -1, -1):
        for q in range(nq):
            total = 0
            for (src, dst), masks in models.items():
                if src == q:
                    total += len(masks) * counts[t + 1][dst]
            counts[t][q] = total
    return counts


def _sample_trace(c, models, counts, length: int, rng: random.Random) -> list[int]:
    """One boolean trace (list of masks), uniform among the counted set."""
    q = c.sfa.initial
    trace = []
    for t in range(length):
        options = [
            (dst, masks)
            for (src, dst), masks in models.items()
            if src == q and len(masks) * counts[t + 1][dst] > 0
        ]
        weights = [len(masks) * counts[t + 1][dst] for dst, masks in options]
        # exact integer sampling; weights can exceed float range
        pick = rng.randrange(sum(weights))
        acc = 0
        for (dst, masks), w in zip(options, weights):
            acc += w
            if pick < acc:
                trace.append(masks[rng.randrange(len(masks))])
                q = dst
                break
    return trace


def encode_trace(masks, num_symbols: int, noise: float, rng: np.random.Generator):
    """Render a boolean trace into noisy two-coordinates-per-symbol features."""
    steps = len(masks)
    feats = np.empty((steps, 2 * num_symbols))
    for t, mask in enumerate(masks):
        for i in range(num_symbols):
            truth = bool(mask >> i & 1)
            feats[t, 2 * i] = 1.0 if truth else -1.0
            feats[t, 2 * i + 1] = -1.0 if truth else 1.0
    if noise:
        feats = feats + rng.normal(0.0, noise, size=feats.shape)
    return feats


def generate_dataset(
    pattern: PatternSpec,
    length: int,
    n_pos: int,
    n_neg: int,
    noise: float = DEFAULT_NOISE,
    seed: int = 0,
) -> SyntheticDataset:
    """Labeled noisy sequences, positives uniform over accepted traces.

    Sampling walks the suffix-count table backwards, so every positive's
    clean trace is accepted (and every negative's rejected) by
    construction. Raises UnsatisfiablePatternError when a class has no
    trace of the requested length.
    """
    c = pattern.compiled
    models = _transition_models(c)
    struct_rng = random.Random(seed)
    noise_rng = np.random.default_rng(seed)
    n_sym = len(c.vocab)

    per_class = {}
    for accept, count in ((True, n_pos), (False, n_neg)):
        if count == 0:
            per_class[accept] = []
            continue
        counts = _suffix_counts(c, models, length, accept)
        if counts[0][c.sfa.initial] == 0:
            kind = "accepting" if accept else "rejecting"
            raise UnsatisfiablePatternError(
                f"pattern '{pattern.name}' has no {kind} trace of length {length}"
            )
        per_class[accept] = [
            _sample_trace(c, models, counts, length, struct_rng) for _ in range(count)
        ]

    sequences = []
    for accept in (True, False):
        for masks in per_class[accept]:
            feats = encode_trace(masks, n_sym, noise, noise_rng)
            clean = np.array(
                [[bool(m >> i & 1) for i in range(n_sym)] for m in masks], dtype=bool
            )
            sequences.append(GeneratedSequence(feats, int(accept), clean))
    return SyntheticDataset(sequences, pattern.name, length, noise, seed)


def reference_probabilities(features: np.ndarray, scale: float = REFERENCE_SCALE):
    """Symbol probabilities from the prototype geometry, no learning involved.

    p_i = sigmoid(scale * (x[2i] - x[2i+1])); with clean prototypes this
    saturates near 0/1 and degrades gracefully under the generator noise.
    """
    features = np.asarray(features, dtype=np.float64)
    diff = features[..., 0::2] - features[..., 1::2]
    return _sigmoid(scale * diff)


# --- dataset files (JSON lines) ----------------------------------------------

def write_dataset_jsonl(dataset: SyntheticDataset, fh) -> None:
    """One JSON object per line: features, label, clean_trace."""
    for seq in dataset.sequences:
        fh.write(
            json.dumps(
                {
                    "features": [[round(v, 9) for v in row] for row in seq.features.tolist()],
                    "label": seq.label,
                    "clean_trace": seq.clean_trace.tolist(),
                }
            )
            + "\n"
        )


def read_sequences_jsonl(fh) -> list[dict]:
    """Parse dataset lines; each record keeps whatever keys were present."""
    records = []
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc})") from exc
    return records


# --- enumerative baseline -----------------------------------------------------

class EnumerativeEngine:
    """Propositionalize-and-enumerate acceptance, no circuits anywhere.

    Each transition guard is expanded into its explicit set of models once;
    every step then sums per-model probabilities (a product over all
    variables each) in plain Python. Exponential in the vocabulary size by
    design; refuses more than ENUMERATIVE_MAX_VARS variables.
    """

    def __init__(self, sfa: Sfa):
        if len(sfa.vocab) > ENUMERATIVE_MAX_VARS:
            raise VocabularyTooLargeError(
                f"enumerative engine is capped at {ENUMERATIVE_MAX_VARS} variables"
            )
        completed, _ = complete_self_loops(sfa)
        self.sfa = completed
        n = len(completed.vocab)
        self.num_vars = n
        self.models = {
            pair: sorted(w.mask for w in enumerate_models(f, n))
            for pair, f in completed.transitions.items()
        }

    def acceptance(self, ps) -> float:
        ps = np.asarray(ps, dtype=np.float64)
        if ps.size and ps.ndim != 2:
            raise ValueError(f"expected a (steps, {self.num_vars}) sequence, got shape {ps.shape}")
        ps = ps.tolist() if ps.size else []
        n = self.num_vars
        nq = self.sfa.num_states
        alpha = [0.0] * nq
        alpha[self.sfa.initial] = 1.0
        for row in ps:
            if len(row) != n:
                raise ValueError(f"probability row has {len(row)} entries, expected {n}")
            # probability of every interpretation under this row
            model_prob = [1.0] * (1 << n)
            for mask in range(1 << n):
                prob = 1.0
                for i in range(n):
                    prob *= row[i] if mask >> i & 1 else 1.0 - row[i]
                model_prob[mask] = prob
            nxt = [0.0] * nq
            for (src, dst), masks in self.models.items():
                weight = alpha[src]
                if weight == 0.0:
                    continue
                total = 0.0
                for mask in masks:
                    total += model_prob[mask]
                nxt[dst] += weight * total
            alpha = nxt
        return sum(alpha[q] for q in self.sfa.accepting)


def enumerative_acceptance(sfa: Sfa, ps) -> float:
    """One-shot form of EnumerativeEngine for a single sequence."""
    return EnumerativeEngine(sfa).acceptance(ps)


# --- benchmark ---------------------------------------------------------------

ENGINES = ("compiled", "enumerative")


@dataclass
class BenchRow:
    pattern: str
    states: int
    symbols: int
    length: int
    engine: str
    batch_ms_median: float
    accuracy: float
    seed: int


@dataclass
class BenchReport:
    rows: list[BenchRow]

    CSV_HEADER = "pattern,states,symbols,length,engine,batch_ms_median,accuracy,seed"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.pattern},{r.states},{r.symbols},{r.length},{r.engine},"
                f"{r.batch_ms_median:.3f},{r.accuracy:.4f},{r.seed}"
            )
        return "\n".join(lines) + "\n"


def run_benchmark(
    patterns: list[PatternSpec],
    lengths: list[int],
    engines: list[str] = list(ENGINES),
    batch_size: int = 16,
    repetitions: int = 5,
    seed: int = 0,
) -> BenchReport:
    """Median wall time per batch of acceptance queries, per configuration.

    Inputs are generated sequences (half positive, half negative) rendered
    to probabilities by the fixed reference extractor, so both engines see
    identical numbers and the accuracy column reflects thresholded
    acceptance against exact labels.
    """
    for engine in engines:
        if engine not in ENGINES:
            raise ValueError(f"unknown engine {engine!r}")
    rows = []
    for pattern in patterns:
        for length in lengths:
            data = generate_dataset(
                pattern, length, (batch_size + 1) // 2, batch_size // 2, seed=seed
            )
            feats = np.stack([s.features for s in data.sequences])
            labels = np.array([s.label for s in data.sequences], dtype=bool)
            ps = reference_probabilities(feats)
            for engine in engines:
                if engine == "compiled":
                    compiled = pattern.compiled

                    def run() -> np.ndarray:
                        return acceptance_batch(compiled, ps)

                else:
                    enum = EnumerativeEngine(pattern.sfa)

                    def run() -> np.ndarray:
                        return np.array([enum.acceptance(seq) for seq in ps])

                times = []
                outputs = None
                for _ in range(repetitions):
                    start = time.perf_counter()
                    outputs = run()
                    times.append((time.perf_counter() - start) * 1000.0)
                accuracy = float(((outputs >= 0.5) == labels).mean())
                rows.append(
                    BenchRow(
                        pattern.name,
                        pattern.num_states,
                        pattern.num_symbols,
                        length,
                        engine,
                        float(np.median(times)),
                        accuracy,
                        seed,
                    )
                )
    return BenchReport(rows)


# --- metrics -------------------------------------------------------------------

def metrics(predictions, labels, num_classes: int | None = None):
    """(accuracy, macro F1). Classes with no predictions and no support
    still divide the macro average when num_classes says they exist."""
    predictions = list(predictions)
    labels = list(labels)
    if not predictions or len(predictions) != len(labels):
        raise ValueError("predictions and labels must be equal-length and nonempty")
    classes = sorted(set(labels) | set(predictions))
    if num_classes is not None:
        classes = sorted(set(classes) | set(range(num_classes)))
    accuracy = sum(p == y for p, y in zip(predictions, labels)) / len(labels)
    f1s = []
    for cls in classes:
        tp = sum(1 for p, y in zip(predictions, labels) if p == cls and y == cls)
        fp = sum(1 for p, y in zip(predictions, labels) if p == cls and y != cls)
        fn = sum(1 for p, y in zip(predictions, labels) if p != cls and y == cls)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return accuracy, sum(f1s) / len(f1s)
