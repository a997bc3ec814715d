"""Entity lifecycle, alert validation, payload, and canonical-form tests."""

from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from e112core.errors import IncompleteAlert, InvalidTransition, ValidationError
from e112core.geo import Circle, Coordinate, Polygon
from e112core.model import (
    SHORT_TEXT_LIMIT,
    TRANSITIONS,
    Alert,
    AlertSource,
    AlertStatus,
    ChatGroup,
    ChatMessage,
    EvacuationRoute,
    GroupStatus,
    Hazard,
    IncidentReport,
    MediaKind,
    MediaRef,
    MessageState,
    ReportStatus,
    ResourceKind,
    ResourcePoint,
    Role,
    Severity,
    SosRequest,
    SosStatus,
    STATUS_ENUMS,
    UserAccount,
    Zone,
    ZoneCategory,
    canonical_json,
    codepoints,
    compose_alert_payload,
    from_canon,
    is_e164,
    to_canon,
    transition,
    validate_alert,
    with_status,
)

AREA = Circle(Coordinate(38.0, 23.7), 5_000)
SOURCE = AlertSource(operator_id="op1", authority="Civil Protection")


def make_alert(**overrides) -> Alert:
    fields = dict(
        id="a1", hazard=Hazard.flood, area=AREA, severity=Severity.warning,
        short_text="Flood warning: move to higher ground now",
        guidance_text="Avoid underpasses; move to higher floors.",
        source=SOURCE, effective_from=100.0, expires_at=200.0,
        status=AlertStatus.active, created_at=50.0,
    )
    fields.update(overrides)
    return Alert(**fields)


class TestTransitions:
    def test_report_submitted_to_acknowledged(self):
        assert transition("report", "submitted", "acknowledged") == "acknowledged"

    def test_report_resolved_back_to_submitted_rejected(self):
        with pytest.raises(InvalidTransition) as e:
            transition("report", "resolved", "submitted")
        assert e.value.details["current"] == "resolved"
        assert e.value.details["requested"] == "submitted"

    def test_sos_must_pass_acknowledged_before_responding(self):
        with pytest.raises(InvalidTransition):
            transition("sos", "open", "responding")

    def test_every_listed_edge_accepted_every_non_edge_rejected(self):
        for kind, edges in TRANSITIONS.items():
            statuses = [s.value for s in STATUS_ENUMS[kind]]
            for cur, req in itertools.product(statuses, statuses):
                if (cur, req) in edges:
                    assert transition(kind, cur, req) == req
                else:
                    with pytest.raises(InvalidTransition):
                        transition(kind, cur, req)

    def test_unknown_kind_and_status_raise_key_error(self):
        with pytest.raises(KeyError):
            transition("bogus", "open", "closed")
        with pytest.raises(KeyError):
            transition("sos", "bogus", "closed")

    def test_lifecycles_are_dags_no_state_revisited(self):
        # Walk every maximal path; a repeated state would mean a cycle.
        for kind, edges in TRANSITIONS.items():
            adj: dict[str, list[str]] = {}
            for cur, req in edges:
                adj.setdefault(cur, []).append(req)

            def walk(state, seen):
                assert state not in seen, f"{kind} revisits {state}"
                for nxt in adj.get(state, []):
                    walk(nxt, seen | {state})

            for start in {s.value for s in STATUS_ENUMS[kind]}:
                walk(start, frozenset())

    def test_with_status_returns_new_value(self):
        sos = SosRequest(id="s1", user_id="u1", location=Coordinate(0, 0),
                         created_at=1.0, status=SosStatus.open)
        moved = with_status(sos, transition("sos", sos.status, "acknowledged"))
        assert moved.status == SosStatus.acknowledged
        assert sos.status == SosStatus.open


class TestValidateAlert:
    def base_fields(self, **overrides):
        fields = dict(
            id="a1", hazard="flood", area=AREA, severity="warning",
            short_text="Flood warning", guidance_text="Go uphill",
            source=SOURCE, effective_from=100.0, expires_at=200.0,
            created_at=50.0,
        )
        fields.update(overrides)
        return fields

    def test_valid_draft_accepted(self):
        a = validate_alert(**self.base_fields())
        assert a.status == AlertStatus.draft

    def test_ninety_codepoints_accepted(self):
        a = validate_alert(**self.base_fields(short_text="x" * SHORT_TEXT_LIMIT))
        assert codepoints(a.short_text) == 90

    def test_ninety_one_codepoints_rejected_with_actual_length(self):
        with pytest.raises(ValidationError) as e:
            validate_alert(**self.base_fields(short_text="x" * 91))
        v = [v for v in e.value.violations if v["code"] == "short_text_too_long"]
        assert v and v[0]["actual_len"] == 91

    def test_greek_text_counted_in_codepoints_not_bytes(self):
        text = "Π" * 90  # 180 bytes in UTF-8, 90 code points
        validate_alert(**self.base_fields(short_text=text))
        with pytest.raises(ValidationError):
            validate_alert(**self.base_fields(short_text="Π" * 91))

    def test_equal_window_endpoints_rejected(self):
        with pytest.raises(ValidationError) as e:
            validate_alert(**self.base_fields(effective_from=200.0, expires_at=200.0))
        assert any(v["code"] == "window_inverted" for v in e.value.violations)

    def test_all_violations_reported_together(self):
        with pytest.raises(ValidationError) as e:
            validate_alert(**self.base_fields(
                short_text="x" * 120, guidance_text="  ",
                effective_from=5.0, expires_at=1.0, hazard="volcano"))
        codes = {v["code"] for v in e.value.violations}
        assert {"short_text_too_long", "empty_guidance", "window_inverted",
                "unknown_hazard"} <= codes

    @pytest.mark.parametrize("field,value,code", [
        ("short_text", "", "empty_short_text"),
        ("guidance_text", "", "empty_guidance"),
        ("hazard", "meteor", "unknown_hazard"),
        ("severity", "mega", "unknown_severity"),
        ("source", AlertSource("op1", "   "), "empty_source"),
    ])
    def test_single_violation_toggles(self, field, value, code):
        validate_alert(**self.base_fields())  # sanity: base is valid
        with pytest.raises(ValidationError) as e:
            validate_alert(**self.base_fields(**{field: value}))
        assert [v["code"] for v in e.value.violations] == [code]


class TestComposeAlertPayload:
    def test_complete_warning_has_all_seven_fields(self):
        payload = compose_alert_payload(make_alert())
        assert set(payload) == {"alert_id", "hazard", "severity", "short_text",
                                "source", "window", "area_bbox"}
        assert payload["source"] == "Civil Protection"
        assert payload["window"] == {"effective_from": 100.0, "expires_at": 200.0}
        box = payload["area_bbox"]
        assert box["lat_min"] < 38.0 < box["lat_max"]
        assert box["lon_min"] < 23.7 < box["lon_max"]

    def test_empty_guidance_is_incomplete(self):
        with pytest.raises(IncompleteAlert):
            compose_alert_payload(make_alert(guidance_text=" "))

    def test_non_active_alert_rejected(self):
        with pytest.raises(ValueError):
            compose_alert_payload(make_alert(status=AlertStatus.draft))

    def test_equal_values_give_byte_identical_payloads(self):
        a1, a2 = make_alert(), make_alert()
        assert canonical_json(compose_alert_payload(a1)) == canonical_json(compose_alert_payload(a2))


class TestE164:
    @pytest.mark.parametrize("phone", ["+306912345678", "+12025550123", "+4915112345678"])
    def test_valid(self, phone):
        assert is_e164(phone)

    @pytest.mark.parametrize("phone", ["12345", "+12345", "+0123456789",
                                       "+30abc1234567", "+1234567890123456", ""])
    def test_invalid(self, phone):
        assert not is_e164(phone)


def sample_entities():
    poly = Polygon((Coordinate(0, 0), Coordinate(0, 1), Coordinate(1, 1)))
    return [
        UserAccount(id="u1", phone="+306912345678", verified=True,
                    display_name="Niki", role=Role.citizen, created_at=1.5,
                    push_token="tok1", last_location=(Coordinate(38, 23.7), 9.0)),
        UserAccount(id="u2", phone="+306900000000", verified=False,
                    display_name="Op", role=Role.operator, created_at=2.0),
        make_alert(),
        make_alert(area=poly, status=AlertStatus.draft),
        SosRequest(id="s1", user_id="u1", location=Coordinate(1, 2),
                   created_at=3.0, status=SosStatus.open, note="trapped"),
        IncidentReport(id="r1", reporter_id="u1", location=Coordinate(1, 2),
                       description="flooded street",
                       media=(MediaRef("ab" * 32, MediaKind.image),),
                       created_at=4.0, status=ReportStatus.submitted),
        ChatGroup(id="g1", alert_id="a1", area=AREA, title="Flood west bank",
                  status=GroupStatus.open, created_by="op1", created_at=5.0,
                  muted_users=frozenset({"u9", "u3"})),
        ChatMessage(id="m1", group_id="g1", author_id="u1", body="anyone near the bridge?",
                    created_at=6.0, state=MessageState.visible, seq=1),
        Zone(id="z1", alert_id="a1", polygon=poly, category=ZoneCategory.affected,
             created_at=7.0),
        ResourcePoint(id="res1", kind=ResourceKind.shelter, name="School gym",
                      location=Coordinate(38.1, 23.8), created_at=8.0),
        EvacuationRoute(id="ev1", alert_id="a1",
                        waypoints=(Coordinate(0, 0), Coordinate(0.5, 0.5), Coordinate(1, 1)),
                        destination_resource_id="res1", created_at=9.0),
    ]


class TestCanonicalForm:
    @pytest.mark.parametrize("entity", sample_entities(), ids=lambda e: type(e).__name__)
    def test_round_trip_is_loss_free(self, entity):
        doc = to_canon(entity)
        assert from_canon(doc) == entity
        assert canonical_json(to_canon(from_canon(doc))) == canonical_json(doc)

    def test_canonical_json_is_stable_across_key_order(self):
        assert canonical_json({"b": 1, "a": [1.5, None]}) == canonical_json({"a": [1.5, None], "b": 1})

    @given(st.floats(allow_nan=False, allow_infinity=False, min_value=-90, max_value=90),
           st.floats(allow_nan=False, allow_infinity=False, min_value=-180, max_value=180),
           st.floats(min_value=0, max_value=2e9))
    def test_user_location_floats_round_trip_bit_exact(self, lat, lon, ts):
        u = UserAccount(id="u", phone="+306912345678", verified=True,
                        display_name="x", role=Role.citizen, created_at=0.0,
                        last_location=(Coordinate(lat, lon), ts))
        import json
        doc = json.loads(canonical_json(to_canon(u)))
        assert from_canon(doc) == u


class TestModelMisc:
    def test_route_needs_two_waypoints(self):
        with pytest.raises(ValidationError):
            EvacuationRoute(id="ev", alert_id="a1", waypoints=(Coordinate(0, 0),),
                            destination_resource_id="r", created_at=0.0)

    def test_zone_colors_cover_all_categories(self):
        zone = Zone(id="z", alert_id="a", category=ZoneCategory.safe, created_at=0.0,
                    polygon=Polygon((Coordinate(0, 0), Coordinate(0, 1), Coordinate(1, 1))))
        assert zone.color == "#006400"
        from e112core.model import ZONE_COLORS
        assert set(ZONE_COLORS) == set(ZoneCategory)

    def test_severity_rank_orders_monotonically(self):
        ranks = [Severity.advisory.rank, Severity.watch.rank,
                 Severity.warning.rank, Severity.emergency.rank]
        assert ranks == sorted(ranks) and len(set(ranks)) == 4
