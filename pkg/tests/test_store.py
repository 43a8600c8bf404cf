import json
import os
import random

import pytest

from disinfox.errors import NotFoundError, StoreCorruptError, StoreError
from disinfox.incidents import ActorRef, CountryRef, new_incident
from disinfox.stix import canonical_bundle_bytes, encode_incident, validate_bundle
from disinfox.store import Store

from _synth import build_corpus


@pytest.fixture()
def urfh_bundle(urfh_record, taxonomy, catalog, fixed_clock):
    return encode_incident(urfh_record, taxonomy, catalog=catalog, clock=fixed_clock)


def _second_record(taxonomy):
    return new_incident(
        name="Second incident", description="Shares the actor.", first_seen="2023-01-01",
        actor=ActorRef("Russia", "nation-state"), countries=[CountryRef("Germany")],
        techniques=["T0002"], taxonomy=taxonomy, strict=True,
    )


def test_put_assigns_contiguous_sequences(store, urfh_bundle):
    incident_id, seqs = store.put_bundle(urfh_bundle)
    assert incident_id.startswith("intrusion-set--")
    assert len(seqs) == len(urfh_bundle["objects"])
    assert seqs == list(range(seqs[0], seqs[0] + len(seqs)))


def test_identical_bundle_not_resequenced(store, urfh_bundle):
    store.put_bundle(urfh_bundle)
    _, seqs = store.put_bundle(urfh_bundle)
    assert seqs == []


def test_single_changed_object_gets_single_sequence(store, urfh_bundle):
    store.put_bundle(urfh_bundle)
    changed = json.loads(canonical_bundle_bytes(urfh_bundle))
    for obj in changed["objects"]:
        if obj["type"] == "intrusion-set":
            obj["description"] = "Edited."
            obj["modified"] = "2025-01-01T00:00:00.000000Z"
    _, seqs = store.put_bundle(changed)
    assert len(seqs) == 1


def test_invalid_bundle_rejected(store, urfh_bundle):
    broken = json.loads(canonical_bundle_bytes(urfh_bundle))
    next(o for o in broken["objects"] if o["type"] == "relationship")["target_ref"] = \
        "location--00000000-0000-5000-8000-000000000000"
    with pytest.raises(StoreError):
        store.put_bundle(broken)


def test_exported_bundle_round_trips_canonically(store, urfh_bundle):
    incident_id, _ = store.put_bundle(urfh_bundle)
    exported = store.bundle_for(incident_id)
    assert canonical_bundle_bytes(exported) == canonical_bundle_bytes(urfh_bundle)
    assert validate_bundle(exported, single_incident=True).ok


def test_bundle_for_unknown_incident(store):
    with pytest.raises(NotFoundError):
        store.bundle_for("intrusion-set--00000000-0000-5000-8000-000000000000")


def test_shared_objects_exported_with_both_incidents(store, urfh_bundle, taxonomy, catalog, fixed_clock):
    first_id, _ = store.put_bundle(urfh_bundle)
    second = encode_incident(_second_record(taxonomy), taxonomy, catalog=catalog, clock=fixed_clock)
    second_id, seqs = store.put_bundle(second)
    # shared threat-actor and attack-pattern were not re-written
    assert len(seqs) == len(second["objects"]) - 2
    for incident_id in (first_id, second_id):
        exported = store.bundle_for(incident_id)
        assert any(o["type"] == "threat-actor" for o in exported["objects"])
        assert validate_bundle(exported, single_incident=True).ok


def test_deleting_incident_keeps_shared_members(store, urfh_bundle, taxonomy, catalog, fixed_clock):
    _, _ = store.put_bundle(urfh_bundle)
    second = encode_incident(_second_record(taxonomy), taxonomy, catalog=catalog, clock=fixed_clock)
    second_id, _ = store.put_bundle(second)
    actor_id = next(o["id"] for o in second["objects"] if o["type"] == "threat-actor")
    pattern_id = next(o["id"] for o in second["objects"] if o["type"] == "attack-pattern")
    removed = store.delete_incident(second_id)
    assert actor_id not in removed and pattern_id not in removed
    assert store.get_object(actor_id) is not None
    assert store.get_object(second_id) is None
    assert store.incident_count == 1


def test_update_tombstones_unreferenced_members(store, urfh_bundle, taxonomy, catalog, fixed_clock):
    incident_id, _ = store.put_bundle(urfh_bundle)
    shrunk_record = new_incident(
        name="Ukraine re-sold French howitzers for profit", description="Edited.",
        first_seen="2022-06-20", actor=ActorRef("Russia", "nation-state"),
        countries=[CountryRef("France")], techniques=["T0002"],
        taxonomy=taxonomy, strict=True,
    )
    shrunk = encode_incident(shrunk_record, taxonomy, catalog=catalog, clock=fixed_clock)
    store.put_bundle(shrunk)
    members = store.members_of(incident_id)
    assert len(members) == 7  # incident, actor, location, pattern, 3 relationships
    tombstones = [row for row in store.objects_since(0, 1000).objects if row.deleted]
    assert len(tombstones) == 18  # 9 dropped patterns + their 9 uses relationships


def test_feed_pages_and_drain_law(store, urfh_bundle):
    store.put_bundle(urfh_bundle)
    total = store.object_count
    page = store.objects_since(0, 10)
    assert len(page.objects) == 10 and page.more
    caught_up = store.objects_since(store.head_seq, 10)
    assert caught_up.objects == [] and not caught_up.more
    assert caught_up.next_seq == store.head_seq

    seen = []
    cursor = 0
    while True:
        page = store.objects_since(cursor, 7)
        seen.extend(row.object_id for row in page.objects)
        cursor = page.next_seq
        if not page.more:
            break
    assert len(seen) == total == len(set(seen))


def test_feed_argument_validation(store):
    with pytest.raises(ValueError):
        store.objects_since(-1, 10)
    with pytest.raises(ValueError):
        store.objects_since(0, 0)
    with pytest.raises(ValueError):
        store.objects_since(0, 1001)


def test_listing_pages_are_disjoint_and_exhaustive(tmp_path, taxonomy, catalog):
    store = Store(str(tmp_path / "s"))
    for record in build_corpus(taxonomy, 100, seed=3):
        store.put_bundle(encode_incident(record, taxonomy, catalog=catalog))
    pages = []
    for page_number in (1, 2, 3):
        items, total = store.list_incidents(page=page_number, page_size=40)
        assert total == 100
        pages.append([item.id for item in items])
    assert [len(p) for p in pages] == [40, 40, 20]
    union = [incident for page in pages for incident in page]
    assert len(union) == len(set(union)) == 100


def test_list_filters_match_brute_force(tmp_path, taxonomy, catalog):
    store = Store(str(tmp_path / "s"))
    corpus = build_corpus(taxonomy, 40, seed=11)
    for record in corpus:
        store.put_bundle(encode_incident(record, taxonomy, catalog=catalog))
    by_technique = [r for r in corpus if "T0002" in r.techniques]
    items, total = store.list_incidents(page_size=200, technique="T0002")
    assert total == len(by_technique)
    assert {i.name for i in items} == {r.name for r in by_technique}

    by_actor = [r for r in corpus if r.actor.name == "Russia"]
    _, total = store.list_incidents(page_size=200, actor="russia")
    assert total == len(by_actor)

    by_country = [r for r in corpus if any(c.name == "France" for c in r.countries)]
    _, total = store.list_incidents(page_size=200, country="France")
    assert total == len(by_country)

    both = [r for r in by_actor if any(c.name == "France" for c in r.countries)]
    _, total = store.list_incidents(page_size=200, actor="Russia", country="France")
    assert total == len(both)


def test_list_rejects_bad_paging(store):
    with pytest.raises(ValueError):
        store.list_incidents(page=0)
    with pytest.raises(ValueError):
        store.list_incidents(page_size=201)


def test_empty_store_degenerates_cleanly(store):
    assert store.list_incidents() == ([], 0)
    assert store.object_count == 0
    assert store.head_seq == 0


def test_reopen_sees_identical_state(tmp_path, urfh_bundle):
    path = str(tmp_path / "s")
    first = Store(path)
    incident_id, _ = first.put_bundle(urfh_bundle)
    second = Store(path)
    assert second.head_seq == first.head_seq
    assert canonical_bundle_bytes(second.bundle_for(incident_id)) == \
        canonical_bundle_bytes(first.bundle_for(incident_id))


def test_second_handle_sees_new_segments(tmp_path, urfh_bundle):
    path = str(tmp_path / "s")
    writer = Store(path)
    reader = Store(path)
    assert reader.object_count == 0
    writer.put_bundle(urfh_bundle)
    assert reader.object_count == writer.object_count  # picked up on refresh


def test_interrupted_commit_leaves_no_trace(tmp_path, urfh_bundle):
    path = str(tmp_path / "s")
    store = Store(path)
    store.put_bundle(urfh_bundle)
    head = store.head_seq
    # a crash mid-write leaves only a temp file, never a committed segment
    with open(os.path.join(path, "seg-9999999999999999.jsonl.tmp"), "w") as handle:
        handle.write('{"seq": 9999, "truncat')
    reopened = Store(path)
    assert reopened.head_seq == head
    assert not any(name.endswith(".tmp") for name in os.listdir(path))


def test_corrupt_segment_named_in_error(tmp_path, urfh_bundle):
    path = str(tmp_path / "s")
    store = Store(path)
    store.put_bundle(urfh_bundle)
    segment = sorted(n for n in os.listdir(path) if n.endswith(".jsonl"))[0]
    with open(os.path.join(path, segment), "a") as handle:
        handle.write("{broken json\n")
    with pytest.raises(StoreCorruptError) as excinfo:
        Store(path)
    assert segment in str(excinfo.value)


def test_random_churn_survives_reopen(tmp_path, taxonomy, catalog):
    rng = random.Random(5)
    path = str(tmp_path / "s")
    store = Store(path)
    corpus = build_corpus(taxonomy, 12, seed=9)
    alive = set()
    for _ in range(40):
        record = rng.choice(corpus)
        action = rng.random()
        bundle = encode_incident(record, taxonomy, catalog=catalog)
        incident_id = next(o["id"] for o in bundle["objects"] if o["type"] == "intrusion-set")
        if action < 0.7 or incident_id not in alive:
            store.put_bundle(bundle)
            alive.add(incident_id)
        else:
            store.delete_incident(incident_id)
            alive.discard(incident_id)
    reopened = Store(path)
    assert set(reopened.incident_ids()) == alive
    assert reopened.object_count == store.object_count
    for incident_id in alive:
        assert validate_bundle(reopened.bundle_for(incident_id), single_incident=True).ok
