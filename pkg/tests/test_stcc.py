import math

import pytest
from hypothesis import given, settings, strategies as st

from agentgate.stcc import (
    BeliefState,
    QuestionDraft,
    build_stcc_question,
    entropy_bits,
    expected_ig,
    rank_attributes,
    validate_neutral_compliance,
)

from .conftest import basic_lexicons, make_config, make_field


def brute_force_ranking(config, belief, rho):
    """Independent oracle: enumerate eligible fields, compute entropy
    directly, and sort (stable on declaration order)."""
    scored = []
    for schema in config.required_fields:
        if schema.field_id in belief.revealed or not schema.question_eligible:
            continue
        if schema.risk > rho:
            continue
        dist = belief.distributions[schema.field_id]
        entropy = -sum(p * math.log2(p) for p in dist if p > 0)
        scored.append((schema.field_id, entropy))
    scored.sort(key=lambda pair: -pair[1])
    return [field_id for field_id, _ in scored]


class TestExpectedIg:
    def test_uniform_binary_is_one_bit(self):
        field = make_field("yn", 2)
        config = make_config([field, make_field("other", 3)])
        belief = BeliefState.from_config(config)
        assert expected_ig(field, belief) == pytest.approx(1.0)

    def test_uniform_four_band_is_two_bits(self):
        field = make_field("quad", 4)
        config = make_config([field])
        belief = BeliefState.from_config(config)
        assert expected_ig(field, belief) == 2.0

    def test_banded_beats_yes_no(self):
        budget = make_field("budget", 3)
        yes_no = make_field("has_budget", 2)
        config = make_config([budget, yes_no])
        belief = BeliefState.from_config(config)
        assert expected_ig(budget, belief) > expected_ig(yes_no, belief)

    def test_skewed_prior_value(self):
        # Oracle: -(0.7 log2 0.7 + 0.2 log2 0.2 + 0.1 log2 0.1) evaluated
        # directly below.
        prior = (0.7, 0.2, 0.1)
        oracle = -sum(p * math.log2(p) for p in prior)
        field = make_field("skewed", 3, prior=prior)
        config = make_config([field])
        belief = BeliefState.from_config(config)
        assert expected_ig(field, belief) == pytest.approx(oracle)
        assert expected_ig(field, belief) == pytest.approx(1.157, abs=1e-3)

    def test_revealed_field_has_zero_gain(self):
        field = make_field("done", 4)
        config = make_config([field])
        belief = BeliefState.from_config(config).collapse("done", 1)
        assert expected_ig(field, belief) == 0.0


class TestRankAttributes:
    def test_five_band_field_ranks_first(self):
        fields = [
            make_field("e", 2),
            make_field("d", 2),
            make_field("c", 3),
            make_field("b", 4),
            make_field("a", 5),
        ]
        config = make_config(fields)
        belief = BeliefState.from_config(config)
        ranked = rank_attributes(config, belief, rho=1.0)
        assert ranked[0].field_id == "a"
        # Two-band fields are not eligible as banded questions.
        assert {draft.field_id for draft in ranked} == {"a", "b", "c"}
        assert [d.field_id for d in ranked] == brute_force_ranking(config, belief, 1.0)

    def test_all_revealed_yields_empty(self):
        config = make_config([make_field("a", 3), make_field("b", 4)])
        belief = BeliefState.from_config(config)
        belief = belief.collapse("a", 0).collapse("b", 2)
        assert rank_attributes(config, belief, rho=1.0) == []

    def test_risky_top_field_gives_way_to_runner_up(self):
        risky = make_field("salary_probe", 5, risk=0.9)
        safe = make_field("constraint", 4, risk=0.1)
        config = make_config([risky, safe])
        belief = BeliefState.from_config(config)
        ranked = rank_attributes(config, belief, rho=0.5)
        assert ranked[0].field_id == "constraint"
        assert all(draft.field_id != "salary_probe" for draft in ranked)

    def test_declaration_order_breaks_ties(self):
        config = make_config([make_field("first", 4), make_field("second", 4)])
        belief = BeliefState.from_config(config)
        ranked = rank_attributes(config, belief, rho=1.0)
        assert [d.field_id for d in ranked] == ["first", "second"]

    @given(
        band_counts=st.lists(st.integers(2, 5), min_size=1, max_size=6),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_oracle(self, band_counts, seed):
        import random

        rng = random.Random(seed)
        fields = []
        for i, n in enumerate(band_counts):
            weights = [rng.random() + 0.01 for _ in range(n)]
            total = sum(weights)
            prior = tuple(w / total for w in weights)
            fields.append(make_field(f"f{i}", n, prior=prior))
        config = make_config(fields)
        belief = BeliefState.from_config(config)
        ranked = [d.field_id for d in rank_attributes(config, belief, rho=1.0)]
        assert ranked == brute_force_ranking(config, belief, 1.0)

    @given(
        rho_pair=st.tuples(st.floats(0, 1), st.floats(0, 1)),
        risks=st.lists(st.floats(0, 1), min_size=2, max_size=5),
    )
    @settings(max_examples=40, deadline=None)
    def test_shrinking_rho_never_adds_candidates(self, rho_pair, risks):
        small, large = sorted(rho_pair)
        fields = [make_field(f"f{i}", 3, risk=risk) for i, risk in enumerate(risks)]
        config = make_config(fields)
        belief = BeliefState.from_config(config)
        at_small = {d.field_id for d in rank_attributes(config, belief, rho=small)}
        at_large = {d.field_id for d in rank_attributes(config, belief, rho=large)}
        assert at_small <= at_large

    def test_argmax_invariant_under_entropy_scaling(self):
        fields = [
            make_field("a", 5, prior=(0.4, 0.3, 0.2, 0.05, 0.05)),
            make_field("b", 4),
            make_field("c", 3),
        ]
        config = make_config(fields)
        belief = BeliefState.from_config(config)
        ranked = [d.field_id for d in rank_attributes(config, belief, rho=1.0)]
        for scale in (0.5, 2.0, 1000.0):
            entropies = {
                s.field_id: scale * expected_ig(s, belief)
                for s in config.required_fields
            }
            rescaled = sorted(ranked, key=lambda fid: -entropies[fid])
            assert rescaled == ranked


class TestBeliefState:
    def test_answer_strictly_reduces_entropy(self):
        config = make_config([make_field("a", 4), make_field("b", 3)])
        belief = BeliefState.from_config(config)
        before = belief.total_entropy_bits
        for band in range(4):
            after = belief.collapse("a", band).total_entropy_bits
            assert after < before

    def test_already_certain_field_changes_nothing(self):
        field = make_field("sure", 3, prior=(1.0, 0.0, 0.0))
        config = make_config([field, make_field("b", 3)])
        belief = BeliefState.from_config(config)
        before = belief.total_entropy_bits
        assert belief.collapse("sure", 0).total_entropy_bits == pytest.approx(before)

    def test_distributions_sum_to_one(self, staffing_config):
        belief = BeliefState.from_config(staffing_config)
        for dist in belief.distributions.values():
            assert sum(dist) == pytest.approx(1.0, abs=1e-9)

    def test_entropy_of_revealed_field_is_zero(self):
        config = make_config([make_field("a", 4)])
        belief = BeliefState.from_config(config).mark_revealed("a")
        assert belief.entropy_of("a") == 0.0
        assert belief.total_entropy_bits == 0.0


class TestBuildQuestion:
    def test_staffing_constraint_prompt(self):
        draft = QuestionDraft(
            field_id="primary_constraint",
            prompt_text="Which constraint most shapes fit for this role?",
            options=(
                "Work authorization",
                "Time-zone overlap",
                "Onsite frequency",
                "Compensation band",
                "Earliest start window",
            ),
            expected_ig_bits=math.log2(5),
            risk_score=0.0,
        )
        assert build_stcc_question(draft) == (
            "Which constraint most shapes fit for this role? "
            "{Work authorization, Time-zone overlap, Onsite frequency, "
            "Compensation band, Earliest start window}"
        )

    def test_procurement_pricing_prompt(self, procurement_config):
        belief = BeliefState.from_config(procurement_config)
        ranked = rank_attributes(procurement_config, belief, rho=1.0)
        assert ranked[0].field_id == "pricing_factor"
        assert build_stcc_question(ranked[0]) == (
            "Which factor most affects your pricing? "
            "{Order volume, Delivery timeline, Payment terms, "
            "Warranty requirements, Technical customization}"
        )

    def test_two_band_attribute_rejected_upstream(self):
        with pytest.raises(ValueError):
            QuestionDraft(
                field_id="x",
                prompt_text="?",
                options=("yes", "no"),
                expected_ig_bits=1.0,
                risk_score=0.0,
            )

    def test_escape_option_for_range_derived_bands(self):
        draft = QuestionDraft(
            field_id="compensation",
            prompt_text="What compensation range are you targeting?",
            options=("Under $80K", "$80K-$100K", "Over $100K"),
            expected_ig_bits=math.log2(3),
            risk_score=0.0,
            include_escape=True,
        )
        assert build_stcc_question(draft).endswith(", Other/Not sure}")


class TestNeutralCompliance:
    def test_neutral_prompt_passes(self):
        violations = validate_neutral_compliance(
            "Which factor most affects your pricing? {Order volume, Delivery timeline}",
            basic_lexicons(),
        )
        assert violations == []

    def test_urgency_framing_flagged(self, staffing_config):
        violations = validate_neutral_compliance(
            "Limited spots! Which band works?", staffing_config.lexicons
        )
        assert any(v.kind == "urgency_framing" for v in violations)

    def test_empty_prompt_flagged(self):
        violations = validate_neutral_compliance("", basic_lexicons())
        assert [v.kind for v in violations] == ["empty_prompt"]

    def test_leading_construction_flagged(self, staffing_config):
        violations = validate_neutral_compliance(
            "This role is great, don't you agree?", staffing_config.lexicons
        )
        assert any(v.kind == "leading_construction" for v in violations)

    def test_binding_language_flagged(self):
        violations = validate_neutral_compliance(
            "We commit to a quick process. Which band works?", basic_lexicons()
        )
        assert any(v.kind == "binding_language" for v in violations)


def test_entropy_bits_handles_zero_mass():
    assert entropy_bits((1.0, 0.0, 0.0)) == 0.0
    assert entropy_bits((0.5, 0.5)) == 1.0
