"""Release acceptance gate: one numbered end-to-end criterion per test.

The terminal summary (see conftest) prints one PASS/FAIL line per criterion.
Criteria cover: the reference incident's golden encoding, the full
ingest-serve-mirror-export pipeline at corpus scale, encode/decode round
trips, idempotence everywhere, feed paging laws, exactly-once mirroring
across crash/restart, and the validator's rule table.
"""

import copy
import json
import random
import subprocess
import sys
import time
import uuid
from collections import Counter
from types import SimpleNamespace

import httpx
import pytest

from disinfox.api import create_app
from disinfox.connector import Connector, export_bundles
from disinfox.incidents import ActorRef, CountryRef, new_incident, semantic_equal
from disinfox.ingest import commit_incident
from disinfox.stix import (
    canonical_bundle_bytes,
    decode_bundle,
    deterministic_id,
    encode_incident,
    external_technique_id,
    relationship_id,
    split_stix_id,
    validate_bundle,
)
from disinfox.store import Store

from _server import ServerThread
from _synth import build_corpus, to_csv
from conftest import URFH_DESCRIPTION, URFH_NAME, URFH_TECHNIQUES

KEY = "acceptance-key"
CORPUS_SIZE = 120

URFH_INCIDENT_ID = "intrusion-set--a8a9f8d9-8d2f-5ca4-8fd0-444363c2e7f7"


@pytest.fixture(scope="module")
def exchange(tmp_path_factory, taxonomy, catalog):
    """Corpus ingest -> live server -> connector mirror -> file export, timed."""
    root = tmp_path_factory.mktemp("exchange")
    server_store = Store(str(root / "server"))
    app = create_app(server_store, taxonomy, catalog=catalog, api_keys={KEY: "submitter"})
    corpus = build_corpus(taxonomy, CORPUS_SIZE, seed=29)
    csv_text = to_csv(corpus)
    with ServerThread(app) as base_url:
        started = time.monotonic()
        bulk = httpx.post(
            f"{base_url}/api/v1/incidents/bulk",
            content=csv_text.encode(),
            headers={"X-API-Key": KEY},
            timeout=120.0,
        )
        mirror = Store(str(root / "mirror"))
        state_path = str(root / "connector-state.json")
        poll_report = Connector(base_url, mirror, state_path, page_limit=350).poll_once()
        export_dir = root / "bundles"
        exported = export_bundles(mirror, str(export_dir))
        elapsed = time.monotonic() - started
        yield SimpleNamespace(
            base_url=base_url,
            server_store=server_store,
            csv_text=csv_text,
            bulk=bulk,
            mirror=mirror,
            state_path=state_path,
            poll_report=poll_report,
            export_dir=export_dir,
            exported=exported,
            elapsed=elapsed,
        )


def test_criterion_1_reference_incident_golden_encoding(urfh_record, taxonomy, catalog, fixed_clock):
    bundle = encode_incident(urfh_record, taxonomy, catalog=catalog, clock=fixed_clock)
    objects = bundle["objects"]

    assert Counter(o["type"] for o in objects) == {
        "intrusion-set": 1,
        "threat-actor": 1,
        "location": 1,
        "attack-pattern": 10,
        "relationship": 12,
    }
    assert len(objects) == 25

    intrusion_set = next(o for o in objects if o["type"] == "intrusion-set")
    assert intrusion_set["id"] == URFH_INCIDENT_ID
    assert intrusion_set["name"] == URFH_NAME
    assert intrusion_set["description"] == URFH_DESCRIPTION
    assert intrusion_set["first_seen"] == "2022-06-20T00:00:00.000000Z"
    assert intrusion_set["labels"] == ["incident", "disinformation"]

    actor = next(o for o in objects if o["type"] == "threat-actor")
    assert actor["id"] == "threat-actor--58608b40-966b-54c3-a3d2-efad7975d8de"
    assert actor["name"] == "Russia"
    assert actor["threat_actor_types"] == ["nation-state"]

    location = next(o for o in objects if o["type"] == "location")
    assert location["id"] == "location--9a38ccd5-c4d6-507a-a017-524fe70e1436"
    assert location["country"] == "France"

    patterns = [o for o in objects if o["type"] == "attack-pattern"]
    assert {external_technique_id(p) for p in patterns} == set(URFH_TECHNIQUES)
    t0002 = next(p for p in patterns if external_technique_id(p) == "T0002")
    # catalog originals embedded verbatim: foreign id and timestamps survive
    assert t0002["id"] == "attack-pattern--70717452-f7e3-4ce8-956f-39a4d34c5cfb"
    assert t0002["created"] == "2023-09-14T20:38:04.999444Z"
    assert t0002["kill_chain_phases"] == [
        {"kill_chain_name": "mitre-attack", "phase_name": "plan-objectives"}
    ]

    relationships = [o for o in objects if o["type"] == "relationship"]
    assert Counter(r["relationship_type"] for r in relationships) == {
        "uses": 10,
        "attributed-to": 1,
        "targets": 1,
    }
    ids_in_bundle = {o["id"] for o in objects}
    for relationship in relationships:
        assert relationship["source_ref"] == intrusion_set["id"]
        assert relationship["target_ref"] in ids_in_bundle
        assert relationship["id"] == relationship_id(
            relationship["relationship_type"],
            relationship["source_ref"],
            relationship["target_ref"],
        )

    # platform-minted ids are version-5 UUIDs; catalog patterns keep theirs
    for obj in objects:
        if obj["type"] != "attack-pattern":
            _, uuid_part = split_stix_id(obj["id"])
            assert uuid.UUID(uuid_part).version == 5

    assert bundle["id"] == deterministic_id("bundle", intrusion_set["id"])
    again = encode_incident(urfh_record, taxonomy, catalog=catalog, clock=fixed_clock)
    assert canonical_bundle_bytes(again) == canonical_bundle_bytes(bundle)
    assert validate_bundle(bundle, single_incident=True).ok


def test_criterion_2_corpus_pipeline_end_to_end(exchange):
    assert exchange.bulk.status_code == 200
    report = exchange.bulk.json()
    assert report["added"] == CORPUS_SIZE
    assert report["row_errors"] == []

    source = exchange.server_store
    assert source.incident_count == CORPUS_SIZE
    assert exchange.poll_report.fetched == source.object_count
    assert exchange.poll_report.imported_new == source.object_count
    assert exchange.poll_report.rejected == []

    mirror = exchange.mirror
    assert set(mirror.incident_ids()) == set(source.incident_ids())
    for incident_id in source.incident_ids():
        assert canonical_bundle_bytes(mirror.bundle_for(incident_id)) == canonical_bundle_bytes(
            source.bundle_for(incident_id)
        )

    assert exchange.exported == CORPUS_SIZE
    files = sorted(exchange.export_dir.iterdir())
    assert len(files) == CORPUS_SIZE
    for path in files:
        file_report = validate_bundle(path.read_bytes(), single_incident=True)
        assert file_report.ok, f"{path.name}: {file_report.errors}"

    assert exchange.elapsed < 60, f"pipeline took {exchange.elapsed:.1f}s"


def test_criterion_3_encode_decode_round_trip_1000(taxonomy, catalog, fixed_clock):
    records = build_corpus(taxonomy, 1000, seed=99)
    for record in records:
        bundle_bytes = canonical_bundle_bytes(
            encode_incident(record, taxonomy, catalog=catalog, clock=fixed_clock)
        )
        decoded, report = decode_bundle(bundle_bytes)
        assert report.ok, f"{record.name}: {report.errors}"
        assert len(decoded) == 1
        assert semantic_equal(decoded[0], record), record.name


def test_criterion_4_resubmission_changes_nothing(exchange):
    source = exchange.server_store
    head_before = source.head_seq
    again = httpx.post(
        f"{exchange.base_url}/api/v1/incidents/bulk",
        content=exchange.csv_text.encode(),
        headers={"X-API-Key": KEY},
        timeout=120.0,
    )
    report = again.json()
    assert report["added"] == 0 and report["updated"] == 0
    assert report["skipped"] == CORPUS_SIZE
    assert source.head_seq == head_before  # no new log entries at all

    second_poll = Connector(exchange.base_url, exchange.mirror, exchange.state_path).poll_once()
    assert second_poll.fetched == 0 and second_poll.imported_new == 0

    # id determinism across separate interpreter processes
    script = (
        "from disinfox.stix.ids import deterministic_id, relationship_id\n"
        f"print(deterministic_id('intrusion-set', {URFH_NAME!r}))\n"
        "print(deterministic_id('threat-actor', 'Russia'))\n"
        "print(relationship_id('uses', 'a', 'b'))\n"
    )
    runs = [
        subprocess.run(
            [sys.executable, "-c", script], capture_output=True, text=True, check=True
        ).stdout
        for _ in range(2)
    ]
    assert runs[0] == runs[1]
    assert runs[0].splitlines()[0] == URFH_INCIDENT_ID


def test_criterion_5_randomized_paged_drains(exchange):
    baseline = []
    cursor = 0
    while True:
        page = exchange.server_store.objects_since(cursor, 1000)
        baseline.extend((row.seq, row.object_id, row.deleted) for row in page.objects)
        cursor = page.next_seq
        if not page.more:
            break

    rng = random.Random(41)
    limits = [1, 2, 999, 1000] + [rng.randint(1, 1000) for _ in range(96)]
    with httpx.Client(base_url=exchange.base_url, timeout=30.0) as client:
        for limit in limits:
            seen = []
            cursor = 0
            while True:
                page = client.get(
                    "/api/v1/stix/objects", params={"since_seq": cursor, "limit": limit}
                ).json()
                for row in page["objects"]:
                    seen.append(
                        (row["seq"], row.get("deleted") or row["object"]["id"], "deleted" in row)
                    )
                cursor = page["next_seq"]
                if not page["more"]:
                    break
            assert seen == baseline, f"drain with limit={limit} diverged"
            assert len({seq for seq, _, _ in seen}) == len(seen)


class Boom(RuntimeError):
    """Injected crash."""


class CrashingConnector(Connector):
    def __init__(self, *args, crash_after: int, crash_point: str, **kwargs):
        super().__init__(*args, **kwargs)
        self.pages_applied = 0
        self.crash_after = crash_after
        self.crash_point = crash_point

    def _apply_page(self, rows, report):
        super()._apply_page(rows, report)
        self.pages_applied += 1
        if self.crash_point == "before_save" and self.pages_applied == self.crash_after:
            raise Boom(f"applied page {self.pages_applied}, died before saving state")

    def _save_state(self):
        super()._save_state()
        if self.crash_point == "after_save" and self.pages_applied == self.crash_after:
            raise Boom(f"saved state for page {self.pages_applied}, then died")


def test_criterion_6_exactly_once_across_crash_and_restart(tmp_path, taxonomy, fixed_clock):
    # catalog-less incident sized to exactly 24 objects: with 9 techniques and
    # 1 country the bundle is 13 nodes (incl. the minting identity) + 11 edges
    record = new_incident(
        name="Grain corridor sabotage narrative",
        description="Coordinated claims that grain exports are being weaponized.",
        first_seen="2023-07-19",
        actor=ActorRef("Storm-1679", "group"),
        countries=[CountryRef("Poland")],
        techniques=sorted(taxonomy.techniques)[:9],
        taxonomy=taxonomy,
        strict=True,
    )
    server_store = Store(str(tmp_path / "server"))
    incident_id, _ = commit_incident(record, server_store, taxonomy, catalog=None, clock=fixed_clock)
    assert server_store.object_count == 24
    reference = canonical_bundle_bytes(server_store.bundle_for(incident_id))

    app = create_app(server_store, taxonomy, catalog=None, api_keys={})
    with ServerThread(app) as base_url:
        for crash_point in ("after_save", "before_save"):
            for boundary in range(1, 25):
                mirror_dir = str(tmp_path / f"m-{crash_point}-{boundary}")
                state_path = str(tmp_path / f"s-{crash_point}-{boundary}.json")
                crasher = CrashingConnector(
                    base_url,
                    Store(mirror_dir),
                    state_path,
                    page_limit=1,
                    crash_after=boundary,
                    crash_point=crash_point,
                )
                with pytest.raises(Boom):
                    crasher.poll_once()

                resumed = Connector(base_url, Store(mirror_dir), state_path, page_limit=1)
                resumed.poll_once()
                where = f"{crash_point} at page {boundary}"
                assert resumed.mirror.object_count == 24, where
                # every object produced exactly one mirror log entry, even when
                # the crashed page was re-fetched after restart
                assert resumed.mirror.head_seq == 24, where
                assert canonical_bundle_bytes(resumed.mirror.bundle_for(incident_id)) == reference


def test_criterion_7_validator_rule_table(urfh_record, taxonomy, catalog, fixed_clock, tmp_path):
    pristine_bytes = canonical_bundle_bytes(
        encode_incident(urfh_record, taxonomy, catalog=catalog, clock=fixed_clock)
    )
    base = json.loads(pristine_bytes)

    def variant(mutate):
        document = copy.deepcopy(base)
        mutate(document)
        return document

    def obj_of(document, object_type):
        return next(o for o in document["objects"] if o["type"] == object_type)

    def uppercase_actor(document):
        actor = obj_of(document, "threat-actor")
        upper = actor["id"].upper()
        actor["id"] = upper
        for o in document["objects"]:
            if o["type"] == "relationship" and o["relationship_type"] == "attributed-to":
                o["target_ref"] = upper

    def mistype_location(document):
        obj_of(document, "location")["type"] = "locality"

    def duplicate_location(document):
        document["objects"].append(copy.deepcopy(obj_of(document, "location")))

    def drop_spec_version(document):
        del obj_of(document, "intrusion-set")["spec_version"]

    def alien_relationship_type(document):
        next(
            o for o in document["objects"]
            if o["type"] == "relationship" and o["relationship_type"] == "attributed-to"
        )["relationship_type"] = "mentions"

    def dangle_targets(document):
        next(
            o for o in document["objects"]
            if o["type"] == "relationship" and o["relationship_type"] == "targets"
        )["target_ref"] = "location--00000000-0000-5000-8000-000000000000"

    def garble_created(document):
        obj_of(document, "intrusion-set")["created"] = "not-a-date"

    def modified_before_created(document):
        obj_of(document, "intrusion-set")["modified"] = "2001-01-01T00:00:00.000000Z"

    def drop_label(document):
        obj_of(document, "intrusion-set")["labels"] = ["incident"]

    def second_incident(document):
        document["objects"].append(
            {
                "type": "intrusion-set",
                "spec_version": "2.1",
                "id": deterministic_id("intrusion-set", "Second narrative"),
                "created": "2024-01-01T00:00:00.000000Z",
                "modified": "2024-01-01T00:00:00.000000Z",
                "name": "Second narrative",
                "labels": ["incident", "disinformation"],
            }
        )

    def no_incident(document):
        document["objects"] = [
            o for o in document["objects"]
            if o["type"] not in ("intrusion-set", "relationship")
        ]

    corrupted = [
        ("truncated JSON", pristine_bytes[:-9], False, {"json"}),
        ("array at top level", base["objects"], False, {"bundle-structure"}),
        ("objects key missing", {"type": "bundle", "id": base["id"]}, False, {"bundle-structure"}),
        ("uppercase uuid", variant(uppercase_actor), False, {"id-format"}),
        ("id prefix vs type", variant(mistype_location), False, {"id-type-mismatch"}),
        ("duplicated object", variant(duplicate_location), False, {"duplicate-id"}),
        ("spec_version dropped", variant(drop_spec_version), False, {"spec-version"}),
        ("alien relationship type", variant(alien_relationship_type), False, {"relationship-type"}),
        ("dangling target_ref", variant(dangle_targets), False, {"dangling-ref"}),
        ("unparseable created", variant(garble_created), False, {"timestamp-format"}),
        ("modified before created", variant(modified_before_created), False, {"timestamp-order"}),
        ("mandatory label dropped", variant(drop_label), False, {"labels"}),
        ("two incidents", variant(second_incident), True, {"single-incident"}),
        ("zero incidents", variant(no_incident), True, {"single-incident"}),
    ]
    for label, document, single_incident, expected in corrupted:
        report = validate_bundle(document, single_incident=single_incident)
        assert not report.ok, label
        assert report.error_rules() == expected, f"{label}: {report.errors}"

    synthesized = encode_incident(urfh_record, taxonomy, catalog=None, clock=fixed_clock)
    minimal = encode_incident(
        new_incident(
            name="Minimal case",
            description="One technique, one country.",
            first_seen="2024-05-05",
            actor=ActorRef("A", "unknown"),
            countries=[CountryRef("Spain")],
            techniques=["T0119"],
            taxonomy=taxonomy,
            strict=True,
        ),
        taxonomy,
        catalog=catalog,
        clock=fixed_clock,
    )
    with_note = variant(
        lambda d: d["objects"].append(
            {"type": "note", "id": f"note--{uuid.uuid5(uuid.NAMESPACE_URL, 'x')}"}
        )
    )
    store = Store(str(tmp_path / "round-trip"))
    store.put_bundle(json.loads(pristine_bytes))
    round_tripped = store.bundle_for(URFH_INCIDENT_ID)

    valid = [
        ("pristine catalog bundle", json.loads(pristine_bytes), True),
        ("synthesized bundle", synthesized, True),
        ("foreign object type tolerated", with_note, True),
        ("minimal incident", minimal, True),
        ("store round trip", round_tripped, True),
    ]
    for label, document, single_incident in valid:
        report = validate_bundle(document, single_incident=single_incident)
        assert report.ok, f"{label}: {report.errors}"
    note_report = validate_bundle(with_note)
    assert any(w.rule == "unknown-type" for w in note_report.warnings)
