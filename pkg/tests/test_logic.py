"""Formula parsing, evaluation, and the exhaustive model enumerator."""

import random

import pytest

from symfa import Interpretation, Vocabulary, enumerate_models, evaluate
from symfa.errors import (
    GuardSyntaxError,
    UndeclaredVariableError,
    VocabularyTooLargeError,
)
from symfa.logic import (
    FALSE,
    TRUE,
    And,
    Not,
    Or,
    Var,
    all_interpretations,
    f_and,
    f_not,
    f_or,
    format_formula,
    parse_formula,
)

from conftest import random_formula


class TestParser:
    def test_guard_with_precedence_and_parens(self, tbf_vocab):
        f = parse_formula("!fast & (tired | blocked)", tbf_vocab)
        assert f == And((Not(Var(2)), Or((Var(0), Var(1)))))

    def test_constants(self, tbf_vocab):
        assert parse_formula("true", tbf_vocab) == TRUE
        assert parse_formula("false", tbf_vocab) == FALSE

    def test_implication_desugars(self):
        vocab = Vocabulary.of("a", "b")
        assert parse_formula("a -> b", vocab) == Or((Not(Var(0)), Var(1)))

    def test_not_binds_tighter_than_and(self, tbf_vocab):
        f = parse_formula("!tired & blocked", tbf_vocab)
        assert f == And((Not(Var(0)), Var(1)))

    def test_and_binds_tighter_than_or(self, tbf_vocab):
        f = parse_formula("tired & blocked | fast", tbf_vocab)
        assert f == Or((And((Var(0), Var(1))), Var(2)))

    def test_nary_flattening(self, tbf_vocab):
        f = parse_formula("tired & blocked & fast", tbf_vocab)
        assert f == And((Var(0), Var(1), Var(2)))

    def test_double_negation_collapses(self, tbf_vocab):
        assert parse_formula("!!tired", tbf_vocab) == Var(0)

    def test_syntax_error_carries_position(self, tbf_vocab):
        with pytest.raises(GuardSyntaxError) as err:
            parse_formula("tired & & fast", tbf_vocab)
        assert err.value.position == 8

    def test_unbalanced_parens(self, tbf_vocab):
        with pytest.raises(GuardSyntaxError):
            parse_formula("(tired | blocked", tbf_vocab)

    def test_trailing_garbage(self, tbf_vocab):
        with pytest.raises(GuardSyntaxError):
            parse_formula("tired blocked", tbf_vocab)

    def test_undeclared_variable_named(self, tbf_vocab):
        with pytest.raises(UndeclaredVariableError) as err:
            parse_formula("tired | sleepy", tbf_vocab)
        assert err.value.name == "sleepy"

    def test_chained_implication_rejected(self):
        vocab = Vocabulary.of("a", "b", "c")
        with pytest.raises(GuardSyntaxError):
            parse_formula("a -> b -> c", vocab)


class TestRoundTrip:
    def test_format_then_parse_is_identity(self, tbf_vocab):
        rng = random.Random(7)
        for _ in range(200):
            f = random_formula(rng, len(tbf_vocab))
            assert parse_formula(format_formula(f, tbf_vocab), tbf_vocab) == f

    def test_bundled_style_guards(self, tbf_vocab):
        for text in ("!tired & !blocked", "tired | blocked", "!fast & (tired | blocked)"):
            f = parse_formula(text, tbf_vocab)
            assert parse_formula(format_formula(f, tbf_vocab), tbf_vocab) == f


class TestEvaluate:
    def test_disjunct_satisfied(self, tbf_vocab):
        f = parse_formula("tired | blocked", tbf_vocab)
        assert evaluate(f, Interpretation.from_true(tbf_vocab, ["tired"]))

    def test_violated_conjunct(self, tbf_vocab):
        f = parse_formula("!fast & (tired | blocked)", tbf_vocab)
        assert not evaluate(f, Interpretation.from_true(tbf_vocab, ["fast", "tired"]))

    def test_self_loop_guard_on_empty_interpretation(self, tbf_vocab):
        f = parse_formula("!tired & !blocked", tbf_vocab)
        assert evaluate(f, Interpretation.from_true(tbf_vocab, []))

    def test_size_mismatch_rejected(self, tbf_vocab):
        f = parse_formula("fast", tbf_vocab)
        with pytest.raises(ValueError):
            evaluate(f, Interpretation(0, 2))

    def test_de_morgan(self):
        vocab = Vocabulary.of("a", "b")
        lhs = f_not(f_and(Var(0), Var(1)))
        rhs = f_or(f_not(Var(0)), f_not(Var(1)))
        for omega in all_interpretations(2):
            assert evaluate(lhs, omega) == evaluate(rhs, omega)


class TestEnumerateModels:
    def test_worked_example_has_three_models(self, tbf_vocab):
        f = parse_formula("!fast & (tired | blocked)", tbf_vocab)
        models = enumerate_models(f, 3)
        names = {m.true_names(tbf_vocab) for m in models}
        assert names == {("tired",), ("blocked",), ("tired", "blocked")}

    def test_false_has_no_models(self):
        assert enumerate_models(FALSE, 3) == set()

    def test_matches_truth_table_on_random_formulas(self):
        rng = random.Random(3)
        for _ in range(100):
            f = random_formula(rng, 3)
            models = enumerate_models(f, 3)
            for omega in all_interpretations(3):
                assert (omega in models) == evaluate(f, omega)

    def test_vocabulary_size_guard(self):
        with pytest.raises(VocabularyTooLargeError):
            enumerate_models(Var(0), 25)


class TestVocabulary:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary.of("a", "b", "a")

    def test_variables_carry_indices(self, tbf_vocab):
        assert [(v.name, v.index) for v in tbf_vocab] == [
            ("tired", 0),
            ("blocked", 1),
            ("fast", 2),
        ]

    def test_interpretation_shorthand(self, tbf_vocab):
        omega = Interpretation.from_true(tbf_vocab, ["tired", "blocked"])
        assert omega.bits() == (True, True, False)
        assert omega.describe(tbf_vocab) == "{tired, blocked}"
