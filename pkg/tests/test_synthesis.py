import dataclasses
import json
import random

import pytest

from helpers import ScriptedClient, bundle, bundles, first_bundle_of, flagged, mutation_suite
from stamp.clients import TransportError, UnparseableResponse
from stamp.synthesis import (
    RepairRejected,
    SeedCatalog,
    UnsupportedTaskSeed,
    VerificationFailed,
    default_catalog,
    external_generate,
    generate_environment,
    pattern_for,
    repair,
    sample_seeds,
    statically_verify,
)
from stamp.synthesis.bundle import ELEMENT_KINDS, EnvironmentBundle
from stamp.synthesis.catalog import CARTNEST, DATE_COMPARE_LATEST, STARWAVE
from stamp.synthesis.patterns import Reading
from stamp.seed_model import SUBMISSION_TESTIDS, tab_testid


def test_sample_seeds_deterministic_and_pinned():
    cat = default_catalog()
    assert sample_seeds(42, cat) == sample_seeds(42, cat)
    p42, t42 = sample_seeds(42, cat)
    p43, t43 = sample_seeds(43, cat)
    assert (p42.app_name, t42.id) == ("CartNest", "date_compare_latest")
    assert (p43.app_name, t43.id) == ("PulseTrack", "price_compare_lowest")


def test_singleton_catalog_always_returns_its_pair():
    cat = SeedCatalog([STARWAVE], [DATE_COMPARE_LATEST])
    assert all(sample_seeds(s, cat) == (STARWAVE, DATE_COMPARE_LATEST) for s in range(20))


def test_empty_catalog_rejected():
    with pytest.raises(ValueError):
        sample_seeds(1, SeedCatalog([], [DATE_COMPARE_LATEST]))


def test_sampling_covers_cross_product():
    cat = default_catalog()
    pairs = {(p.app_name, t.id) for p, t in (sample_seeds(s, cat) for s in range(400))}
    assert len(pairs) == len(cat.platforms) * len(cat.tasks)


def test_generation_is_deterministic():
    a = generate_environment(STARWAVE, DATE_COMPARE_LATEST, 11)
    b = generate_environment(STARWAVE, DATE_COMPARE_LATEST, 11)
    assert a.digest() == b.digest()
    assert generate_environment(STARWAVE, DATE_COMPARE_LATEST, 12).digest() != a.digest()


def test_unsupported_task_seed():
    seed = dataclasses.replace(DATE_COMPARE_LATEST, id="count_likes")
    with pytest.raises(UnsupportedTaskSeed):
        generate_environment(STARWAVE, seed, 1)


def test_latest_date_oracle():
    pattern = pattern_for("date_compare_latest")
    dates = {"a": "2024-03-01", "b": "2024-05-09", "c": "2024-04-30"}
    names = {"a": "AnnLee", "b": "BoKim", "c": "CyRay"}
    readings = [Reading(s, f"detail-{s}", d, names[s]) for s, d in dates.items()]
    assert pattern.solve(readings, []).predicted == names[max(dates, key=dates.get)] == "BoKim"


def test_generated_gold_is_brute_force_extreme():
    for b in bundles(range(1, 101)):
        pattern = pattern_for(b.task_seed_id)
        keys = [m["fact_key"] for m in b.memory_items]
        if b.task_seed_id == "date_compare_latest":
            best = max(keys, key=lambda k: b.facts[k])  # ISO dates sort lexically
            assert b.gold == b.facts["name_" + best.split("_")[1]]
        elif b.task_seed_id == "price_compare_lowest":
            best = min(keys, key=lambda k: float(b.facts[k].lstrip("$")))
            assert b.gold == b.facts["name_" + best.split("_")[1]]
        else:
            assert b.gold == pattern.sep.join(b.facts[k] for k in keys)


def test_starwave_date_bundle_shape():
    b = generate_environment(STARWAVE, DATE_COMPARE_LATEST, 3)
    roles = [p.role for p in b.page_graph.pages if p.role.startswith(("Detail", "Submit"))]
    assert roles == ["Detail A", "Detail B", "Detail C", "Submit name"]
    assert [t.label for t in b.page_graph.tab_bar] == STARWAVE.tabs
    assert statically_verify(b).ok


def test_every_bundle_verifies_and_declares_testids_once():
    for noise in ("low", "high"):
        for b in bundles(range(1, 101), noise):
            report = statically_verify(b)
            assert report.ok, (b.bundle_id, report.rule_ids, report.ambiguity_reasons)
            ids = [el.testid for _, el in b.page_graph.iter_elements()]
            assert len(ids) == len(set(ids))
            for required in b.task_spec["ui_contract"]["required_testids"]:
                assert ids.count(required) == 1


def test_bundle_invariants():
    for b in bundles(range(1, 41)):
        graph = b.page_graph
        sub = graph.page(graph.submission_page_id)
        kinds = {el.kind for el in sub.elements}
        assert {"input", "submit", "result", "back"} <= kinds and "tab" not in kinds and not sub.chrome
        assert all(p.chrome for p in graph.pages if p.id != graph.submission_page_id)
        assert set(SUBMISSION_TESTIDS) <= {el.testid for _, el in graph.iter_elements()}
        keys = {m["fact_key"] for m in b.memory_items}
        for _, el in graph.iter_elements():
            assert el.kind in ELEMENT_KINDS
            if el.kind == "fact_display":
                assert el.fact_key and el.value is not None
            if el.kind == "distractor":
                assert el.fact_key not in keys
        for key in keys:
            shows = [el for _, el in graph.iter_elements() if el.kind == "fact_display" and el.value == b.facts[key]]
            assert len(shows) == 1
        assert b.gold == b.scenario["data"]["truth"]["gold"] == b.task_spec["task"]["grading"]["gold"]
        assert len(b.scenario["ui_requirements"]["distraction_interactions"]) >= 5


def test_distractor_removal_keeps_answer():
    for b in bundles(range(1, 31), "high"):
        before = statically_verify(b).predicted_answer
        for p in b.page_graph.pages:
            p.elements = [el for el in p.elements if el.kind != "distractor"]
        assert statically_verify(b).predicted_answer == before == b.gold


def test_bundle_serialization_round_trip():
    b = bundle(3)
    again = EnvironmentBundle.from_dict(json.loads(json.dumps(b.to_dict())))
    assert again.digest() == b.digest()
    assert b.file_name() == f"3-{b.task_seed_id}.bundle.json"


def test_bundle_schema_version_checked():
    d = bundle(3).to_dict()
    d["stamp_schema"] = 99
    with pytest.raises(ValueError):
        EnvironmentBundle.from_dict(d)


def test_competing_distractor_flagged_with_reason():
    b = first_bundle_of("date_compare_latest")
    pattern = pattern_for(b.task_seed_id)
    best = max(pattern.parse(b.facts[m["fact_key"]]) for m in b.memory_items)
    dist = next(el for p in b.page_graph.pages for el in p.elements if el.kind == "distractor")
    dist.value = pattern.encode(best + 3)
    report = statically_verify(b)
    assert not report.is_unique and not report.ok
    assert any(dist.testid in r for r in report.ambiguity_reasons)


def test_deleted_answer_input_is_structural_violation():
    b = bundle(4)
    sub = b.page_graph.page(b.page_graph.submission_page_id)
    sub.elements = [el for el in sub.elements if el.testid != "answer-input"]
    assert statically_verify(b).violations


def test_mutation_suite_detection_rate():
    suite = mutation_suite(200)
    caught = sum(flagged(statically_verify(b)) for b, _ in suite)
    assert caught / len(suite) >= 0.95
    assert not any(flagged(statically_verify(b)) for b in bundles(range(1, 101)))


def test_repair_lowers_competing_distractor():
    b = first_bundle_of("date_compare_latest")
    pattern = pattern_for(b.task_seed_id)
    best = max(pattern.parse(b.facts[m["fact_key"]]) for m in b.memory_items)
    dist = next(el for p in b.page_graph.pages for el in p.elements if el.kind == "distractor")
    dist.value = pattern.encode(best + 10)
    fixed = repair(b, statically_verify(b))
    assert statically_verify(fixed).ok
    new = next(el for _, el in fixed.page_graph.iter_elements() if el.testid == dist.testid)
    assert new.value is None or pattern.parse(new.value) < best
    assert fixed.facts == b.facts  # truth untouched
    assert 1 <= fixed.provenance["repair_rounds"] <= 3 and fixed.provenance["changes"]


def test_repair_inserts_missing_result():
    b = bundle(5)
    sub = b.page_graph.page(b.page_graph.submission_page_id)
    sub.elements = [el for el in sub.elements if el.testid != "result"]
    fixed = repair(b, statically_verify(b))
    assert statically_verify(fixed).ok
    assert any(el.testid == "result" for el in fixed.page_graph.page("submit").elements)


def test_repair_rejects_contradictory_gold():
    b = bundle(6)
    b.scenario["task"]["gold"] = "not-the-truth"
    with pytest.raises(RepairRejected):
        repair(b, statically_verify(b))
    assert b.scenario["data"]["truth"]["gold"] != "not-the-truth"


def test_repair_fixes_mutations():
    rng = random.Random(3)
    fixed_count = 0
    suite = mutation_suite(40, seed=rng.randrange(1000))
    for b, _ in suite:
        try:
            out = repair(b, statically_verify(b))
        except RepairRejected:
            continue
        assert statically_verify(out).ok
        fixed_count += 1
    assert fixed_count >= 30


# ---------------------------------------------------------------------------
# external generation through a mock service


def _canned(seed=5):
    b = generate_environment(STARWAVE, DATE_COMPARE_LATEST, seed)
    return b, json.dumps(b.scenario), json.dumps(b.task_spec)


def test_external_pass_through():
    b, scn, spec = _canned()
    client = ScriptedClient(scn, "```json\n" + spec + "\n```")
    out = external_generate(STARWAVE, DATE_COMPARE_LATEST, client, rng_seed=5)
    assert out.scenario == b.scenario and out.task_spec == b.task_spec
    assert out.page_graph.to_dict() == b.page_graph.to_dict()
    assert out.provenance["generator"] == "external"
    assert len(client.requests) == 2
    assert '"fixed_values"' in client.requests[0][0]["content"]


def test_external_malformed_text():
    client = ScriptedClient("Sure! Here is your scenario: {oops")
    with pytest.raises(UnparseableResponse):
        external_generate(STARWAVE, DATE_COMPARE_LATEST, client, rng_seed=5)


def test_external_transport_failure_and_fallback():
    with pytest.raises(TransportError):
        external_generate(STARWAVE, DATE_COMPARE_LATEST, ScriptedClient(TransportError("down")), rng_seed=5)
    out = external_generate(STARWAVE, DATE_COMPARE_LATEST, ScriptedClient(TransportError("down")), rng_seed=5,
                            fallback=True)
    assert out.provenance["generator"] == "procedural" and statically_verify(out).ok


def test_external_ambiguous_document_is_repaired():
    b, scn, spec = _canned()
    doc = json.loads(spec)
    doc["ui_contract"]["required_testids"].remove("result")
    out = external_generate(STARWAVE, DATE_COMPARE_LATEST, ScriptedClient(scn, json.dumps(doc)), rng_seed=5)
    assert statically_verify(out).ok and out.provenance["repair_rounds"] >= 1


def test_external_contradictory_gold_rejected():
    b, scn, spec = _canned()
    doc = json.loads(scn)
    doc["task"]["gold"] = "Nobody"
    with pytest.raises(VerificationFailed):
        external_generate(STARWAVE, DATE_COMPARE_LATEST, ScriptedClient(json.dumps(doc), spec), rng_seed=5)


def test_cartnest_tabs_in_bundle():
    b = generate_environment(CARTNEST, DATE_COMPARE_LATEST, 9)
    assert [t.testid for t in b.page_graph.tab_bar] == [tab_testid(t) for t in CARTNEST.tabs]
