import copy
import json

import numpy as np
import pytest

from terrashadow.errors import ScenarioValidationError, ValidationError
from terrashadow.harness import (
    BUILTIN_CHECKS,
    BusConfig,
    Complexity,
    Fidelity,
    Level,
    MessageBus,
    TestTag,
    builtin_taxonomy,
    collaborative_detection_doc,
    load_scenario,
    message_burst_doc,
    reordering_doc,
    run_collaborative,
    run_scenario,
    scenario_from_dict,
    taxonomy_report,
)


# --- taxonomy ---------------------------------------------------------------


def test_empty_taxonomy():
    rep = taxonomy_report([])
    assert all(c == {"total": 0, "passed": 0, "failed": 0} for c in rep.counts.values())
    assert rep.covered == () and len(rep.uncovered) == 8
    assert len(rep.counts) == len(Level) * len(Fidelity) * len(Complexity)


def test_single_pass_taxonomy():
    tag = TestTag(Level.UNIT, Fidelity.SIL, Complexity.SIMPLE, frozenset({"C3"}))
    rep = taxonomy_report([(tag, True)])
    assert rep.counts[(Level.UNIT, Fidelity.SIL, Complexity.SIMPLE)]["passed"] == 1
    assert rep.covered == ("C3",)
    doc = json.loads(rep.to_json())
    assert doc["challenge_coverage"] == ["C3"]
    assert "C3" in rep.to_table()


def test_failed_tests_do_not_cover():
    tag = TestTag(Level.SYSTEM, Fidelity.HIL, Complexity.EDGE, frozenset({"C5"}))
    rep = taxonomy_report([(tag, False)])
    assert rep.counts[(Level.SYSTEM, Fidelity.HIL, Complexity.EDGE)]["failed"] == 1
    assert rep.covered == ()


def test_tag_validation_and_roundtrip():
    tag = TestTag("system", "REAL", "moderate", frozenset({"C1", "C8"}))
    assert TestTag.from_dict(tag.to_dict()) == tag
    with pytest.raises(ValidationError):
        TestTag(Level.UNIT, Fidelity.SIL, Complexity.SIMPLE, frozenset({"C9"}))
    with pytest.raises(ValidationError):
        TestTag("PROTOTYPE", "SIL", "SIMPLE", frozenset())


def test_builtin_suite_coverage():
    results, rep = builtin_taxonomy()
    assert len(results) == len(BUILTIN_CHECKS)
    failed = [r.name for r in results if not r.passed]
    assert failed == []
    assert set(rep.covered) == {f"C{k}" for k in range(1, 8)}
    assert rep.uncovered == ("C8",)


# --- bus --------------------------------------------------------------------


def test_bus_config_validation():
    for bad in [dict(latency_mean_s=-1.0), dict(jitter_s=-0.1), dict(drop_probability=1.5)]:
        with pytest.raises(ValidationError):
            BusConfig(**bad)
    with pytest.raises(ValidationError):
        BusConfig.from_dict({"latency": 1.0})


def test_bus_latency_never_negative_and_conserved():
    bus = MessageBus(BusConfig(latency_mean_s=0.01, jitter_s=0.5, drop_probability=0.2), np.random.default_rng(1))
    msgs = [bus.send("a", "b", "fix", k, now=0.1 * k) for k in range(500)]
    for m in msgs:
        if m.deliver_at is not None:
            assert m.deliver_at >= m.sent_at
    bus.check_conservation()
    assert bus.stats.in_flight() == bus.stats.sent - bus.stats.dropped
    delivered = sorted((m for m in msgs if m.deliver_at is not None), key=lambda m: (m.deliver_at, m.seq))
    for m in delivered:
        bus.mark_delivered(m)
    bus.check_conservation()
    assert bus.stats.in_flight() == 0
    # Heavy jitter relative to the send interval must produce some inversions.
    assert bus.stats.reordered > 0


# --- scenarios ----------------------------------------------------------------


def test_collaborative_zero_noise():
    rep = run_collaborative()
    assert rep.passed, [a.to_dict() for a in rep.assertions if not a.passed]
    headings = [a for a in rep.assertions if a.check == "heading_to"]
    assert len(headings) == 2 and all(a.measured <= 0.5 for a in headings)
    assert rep.bus["sent"] == rep.bus["delivered"] + rep.bus["dropped"] + rep.bus["in_flight"]


def test_total_loss_never_reorients():
    rep = run_collaborative(bus=BusConfig(0.2, 0.1, 1.0), expect_delivery=False)
    assert rep.passed
    assert rep.bus["dropped"] == rep.bus["sent"] == 1 and rep.bus["delivered"] == 0
    assert rep.final_states["helper"]["reoriented"] is False


def test_collaborative_bit_identical():
    a = run_collaborative(noise="scatter-airborne", seed=42)
    b = run_collaborative(noise="scatter-airborne", seed=42)
    assert a.to_json() == b.to_json() and a.events_csv() == b.events_csv()
    c = run_collaborative(noise="scatter-airborne", seed=43)
    assert c.to_json() != a.to_json()


def test_binomial_drop_counts():
    counts = []
    for seed in range(8):
        rep = run_scenario(scenario_from_dict(message_burst_doc(100, 0.3, seed)))
        again = run_scenario(scenario_from_dict(message_burst_doc(100, 0.3, seed)))
        assert rep.bus["dropped"] == again.bus["dropped"]
        assert rep.bus["sent"] == 100
        counts.append(rep.bus["dropped"])
    assert all(15 <= c <= 45 for c in counts)
    assert len(set(counts)) > 1


def test_latest_timestamp_wins():
    rep = run_scenario(scenario_from_dict(reordering_doc()))
    assert rep.passed, [a.to_dict() for a in rep.assertions]
    assert rep.bus["reordered"] == 1


def test_scenario_file_roundtrip(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(collaborative_detection_doc()))
    rep = run_scenario(load_scenario(path))
    assert rep.passed
    header = rep.events_csv().splitlines()[0]
    assert header == "t,agent,type,outcome,detail"


def test_scenario_terrain_from_file(tmp_path):
    from terrashadow.terrain import save_grid, synth_terrain

    save_grid(synth_terrain("FLAT", base_elevation_m=274.0), tmp_path / "g.json")
    doc = collaborative_detection_doc()
    doc["terrain"] = {"path": "g.json"}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert run_scenario(load_scenario(path)).passed


def _broken(mutate):
    doc = copy.deepcopy(collaborative_detection_doc())
    mutate(doc)
    return doc


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["script"].append({"t": 1.0, "type": "hover", "agent": "ghost", "duration_s": 1.0}),
        lambda d: d["agents"].append(copy.deepcopy(d["agents"][0])),
        lambda d: d.__setitem__("version", 2),
        lambda d: d["script"].append({"t": 1.0, "type": "teleport", "agent": "finder"}),
        lambda d: d["script"][0].__setitem__("colour", "red"),
        lambda d: d["script"][0].__setitem__("t", -1.0),
        lambda d: d["tags"].__setitem__("challenges", []),
        lambda d: d["script"].append({"t": 2.0, "type": "publish_geolocation", "agent": "finder", "label": "person", "to": "nobody"}),
        lambda d: d["script"].append({"t": 2.0, "type": "publish_geolocation", "agent": "finder", "label": "person", "to": ["helper"]}),
        lambda d: d["bus"].__setitem__("drop_probability", 2.0),
        lambda d: d["agents"][0].__setitem__("noise", "no-such-preset"),
        lambda d: d["script"].append({"t": 2.0, "type": "assert", "check": "vibes", "agent": "finder"}),
    ],
)
def test_invalid_scenarios_rejected(mutate):
    with pytest.raises(ScenarioValidationError):
        scenario_from_dict(_broken(mutate))


def test_malformed_scenario_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioValidationError):
        load_scenario(path)
