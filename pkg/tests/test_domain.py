import json

import pytest
from hypothesis import given, strategies as st

from agentgate.domain import (
    BoundaryRule,
    ConfigError,
    FieldSchema,
    ThresholdOrderingError,
    UnitMismatchError,
    check_value_in_band,
    load_domain_config,
    serialize_domain_config,
)

from .conftest import make_config, make_field, usd_band


class TestLoadDomainConfig:
    def test_staffing_fixture_has_eleven_fields(self, staffing_config):
        assert len(staffing_config.required_fields) == 11
        assert staffing_config.tau_gate == 0.7
        assert staffing_config.domain_id == "staffing"

    def test_threshold_ordering_violation(self, staffing_config):
        doc = staffing_config.to_dict()
        doc["thresholds"]["tau_gate"] = 0.9
        doc["thresholds"]["tau_complete"] = 0.7
        with pytest.raises(ThresholdOrderingError):
            load_domain_config(doc)

    def test_empty_checklist_rejected(self, staffing_config):
        doc = staffing_config.to_dict()
        doc["fields"] = []
        with pytest.raises(ConfigError) as err:
            load_domain_config(doc)
        assert err.value.key == "fields"

    def test_unknown_top_level_key_rejected(self, staffing_config):
        doc = staffing_config.to_dict()
        doc["surprise"] = 1
        with pytest.raises(ConfigError) as err:
            load_domain_config(doc)
        assert "surprise" in str(err.value)

    def test_unknown_field_key_rejected(self, staffing_config):
        doc = staffing_config.to_dict()
        doc["fields"][2]["typo_key"] = True
        with pytest.raises(ConfigError) as err:
            load_domain_config(doc)
        assert "typo_key" in str(err.value)

    def test_missing_threshold_key_rejected(self, staffing_config):
        doc = staffing_config.to_dict()
        del doc["thresholds"]["stall_k"]
        with pytest.raises(ConfigError) as err:
            load_domain_config(doc)
        assert "stall_k" in str(err.value)

    def test_duplicate_field_ids_rejected(self):
        fields = [make_field("a", 3), make_field("a", 3)]
        with pytest.raises(ConfigError):
            make_config(fields)

    def test_accepts_json_string(self, staffing_config):
        text = serialize_domain_config(staffing_config)
        assert load_domain_config(text) == staffing_config

    @pytest.mark.parametrize("ref", ["staffing", "contractor", "procurement"])
    def test_round_trip_identity(self, ref, request):
        config = request.getfixturevalue(f"{ref}_config")
        doc = json.loads(serialize_domain_config(config))
        assert load_domain_config(doc) == config


class TestFieldSchema:
    def test_prior_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            make_field("x", 3, prior=(0.5, 0.2, 0.2))

    def test_default_prior_uniform(self):
        schema = make_field("x", 4)
        assert schema.prior == (0.25, 0.25, 0.25, 0.25)

    def test_weight_bounds(self):
        with pytest.raises(ConfigError):
            make_field("x", 3, weight=0.0)
        with pytest.raises(ConfigError):
            make_field("x", 3, weight=1.5)

    def test_question_eligibility_window(self):
        assert not make_field("two", 2).question_eligible
        assert make_field("three", 3).question_eligible
        assert make_field("five", 5).question_eligible
        assert not make_field("six", 6).question_eligible

    def test_effective_confidence_threshold(self):
        plain = make_field("plain", 3)
        critical = make_field("critical", 3, safety_critical=True)
        overridden = make_field("override", 3, confidence_threshold=0.6)
        config = make_config([plain, critical, overridden])
        assert config.effective_confidence_threshold(plain) == 0.7
        assert config.effective_confidence_threshold(critical) == 0.8
        assert config.effective_confidence_threshold(overridden) == 0.6


class TestBoundaryRules:
    def test_value_above_band(self):
        rule = usd_band(50000, 60000)
        assert check_value_in_band(rule, 65000) is False

    def test_interior_point(self):
        rule = usd_band(50000, 60000)
        assert check_value_in_band(rule, 55000) is True

    def test_inclusive_endpoints(self):
        rule = usd_band(50000, 60000)
        assert check_value_in_band(rule, 60000) is True
        assert check_value_in_band(rule, 50000) is True

    def test_unit_mismatch(self):
        rule = usd_band(50000, 60000)
        with pytest.raises(UnitMismatchError):
            check_value_in_band(rule, 55000, unit="EUR")

    def test_prohibition_needs_patterns(self):
        with pytest.raises(ConfigError):
            BoundaryRule(rule_id="p", kind="prohibition", patterns=())

    def test_numeric_band_ordering(self):
        with pytest.raises(ConfigError):
            BoundaryRule(
                rule_id="bad",
                kind="numeric_band",
                field_id="x",
                min_value=10,
                max_value=5,
            )

    def test_wrong_kind_for_band_check(self):
        rule = BoundaryRule(rule_id="p", kind="prohibition", patterns=("x",))
        with pytest.raises(ValueError):
            check_value_in_band(rule, 1)

    @given(
        low=st.floats(-1e6, 1e6, allow_nan=False),
        width=st.floats(0, 1e6, allow_nan=False),
        value=st.floats(-2e6, 2e6, allow_nan=False),
    )
    def test_band_membership_xor_outside(self, low, width, value):
        rule = usd_band(low, low + width)
        inside = check_value_in_band(rule, value)
        outside = value < rule.min_value or value > rule.max_value
        assert inside != outside


class TestFixtureShape:
    def test_staffing_field_ids_document_the_checklist(self, staffing_config):
        # Fixture convention: the nine facts named for this domain plus
        # references and background_check make up the 11-item checklist.
        assert staffing_config.field_ids == (
            "work_auth",
            "timezone",
            "skills",
            "seniority",
            "compensation",
            "start_date",
            "contract_type",
            "location",
            "interview_availability",
            "references",
            "background_check",
        )

    def test_staffing_band_is_80_to_100k(self, staffing_config):
        rule = staffing_config.numeric_boundaries()[0]
        assert (rule.min_value, rule.max_value) == (80000, 100000)
        assert rule.unit == "USD"

    def test_configs_share_threshold_defaults(
        self, staffing_config, contractor_config, procurement_config
    ):
        for config in (staffing_config, contractor_config, procurement_config):
            assert config.tau_gate == 0.7
            assert config.tau_complete == 0.85
            assert config.stall_k == 3
            assert config.max_rounds == 20
