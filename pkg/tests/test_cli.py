import json
import os

import pytest
from click.testing import CliRunner

from disinfox.api import create_app
from disinfox.cli import main
from disinfox.ingest import ingest
from disinfox.stix import canonical_bundle_bytes, encode_incident
from disinfox.store import Store

from _server import ServerThread
from _synth import build_corpus, to_csv

CSV = (
    "name,description,first_seen,actor,actor_type,countries,techniques,source_url\n"
    "CLI case,Seeded via CSV.,2024-03-04,Russia,nation-state,France,T0002;T0040,\n"
)


@pytest.fixture()
def runner():
    return CliRunner()


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "disinfox" in result.output


def test_ingest_then_export_locally(runner, tmp_path):
    data_dir = str(tmp_path / "data")
    csv_path = tmp_path / "corpus.csv"
    csv_path.write_text(CSV)

    result = runner.invoke(main, ["ingest-csv", str(csv_path), "--data-dir", data_dir, "--json"])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["added"] == 1

    store = Store(data_dir)
    incident_id = store.incident_ids()[0]
    out_path = tmp_path / "bundle.json"
    result = runner.invoke(
        main, ["export-incident", incident_id, "--data-dir", data_dir, "--out", str(out_path)]
    )
    assert result.exit_code == 0, result.output
    assert out_path.read_bytes() == canonical_bundle_bytes(store.bundle_for(incident_id))


def test_ingest_row_errors_exit_1(runner, tmp_path):
    csv_path = tmp_path / "corpus.csv"
    csv_path.write_text(CSV + "Bad,Broken date.,never,X,group,France,T0002,\n")
    result = runner.invoke(main, ["ingest-csv", str(csv_path), "--data-dir", str(tmp_path / "d")])
    assert result.exit_code == 1
    assert "row_errors=1" in result.output


def test_ingest_bad_header_exit_2(runner, tmp_path):
    csv_path = tmp_path / "corpus.csv"
    csv_path.write_text("name,description\nA,B\n")
    result = runner.invoke(main, ["ingest-csv", str(csv_path), "--data-dir", str(tmp_path / "d")])
    assert result.exit_code == 2
    assert "header" in result.output


def test_ingest_requires_data_dir_or_server(runner, tmp_path, monkeypatch):
    monkeypatch.delenv("DISINFOX_DATA_DIR", raising=False)
    csv_path = tmp_path / "corpus.csv"
    csv_path.write_text(CSV)
    result = runner.invoke(main, ["ingest-csv", str(csv_path)])
    assert result.exit_code == 2


def test_export_rejects_malformed_id(runner, tmp_path):
    result = runner.invoke(
        main, ["export-incident", "not-an-id", "--data-dir", str(tmp_path / "d")]
    )
    assert result.exit_code == 2


def test_export_unknown_incident_exit_1(runner, tmp_path):
    result = runner.invoke(
        main,
        [
            "export-incident",
            "intrusion-set--00000000-0000-5000-8000-000000000000",
            "--data-dir",
            str(tmp_path / "d"),
        ],
    )
    assert result.exit_code == 1
    assert "not found" in result.output


def test_validate_bundle_clean_and_broken(runner, tmp_path, urfh_record, taxonomy, catalog, fixed_clock):
    bundle = encode_incident(urfh_record, taxonomy, catalog=catalog, clock=fixed_clock)
    clean_path = tmp_path / "clean.json"
    clean_path.write_bytes(canonical_bundle_bytes(bundle))
    result = runner.invoke(main, ["validate-bundle", str(clean_path)])
    assert result.exit_code == 0
    assert "ok" in result.output

    broken = json.loads(canonical_bundle_bytes(bundle))
    relationship = next(o for o in broken["objects"] if o["type"] == "relationship")
    relationship["target_ref"] = "location--00000000-0000-5000-8000-000000000000"
    broken_path = tmp_path / "broken.json"
    broken_path.write_text(json.dumps(broken))
    result = runner.invoke(main, ["validate-bundle", str(broken_path), "--json"])
    assert result.exit_code == 1
    report = json.loads(result.output)
    assert not report["ok"]
    assert any(e["rule"] == "dangling-ref" for e in report["errors"])


def test_corrupt_store_failure_names_segment(runner, tmp_path, urfh_record, taxonomy, catalog, fixed_clock):
    data_dir = str(tmp_path / "data")
    store = Store(data_dir)
    store.put_bundle(encode_incident(urfh_record, taxonomy, catalog=catalog, clock=fixed_clock))
    segment = next(n for n in os.listdir(data_dir) if n.endswith(".jsonl"))
    with open(os.path.join(data_dir, segment), "a") as handle:
        handle.write("{broken\n")
    incident_id = "intrusion-set--00000000-0000-5000-8000-000000000000"
    result = runner.invoke(main, ["export-incident", incident_id, "--data-dir", data_dir])
    assert result.exit_code == 1
    assert segment in result.output


def test_serve_rejects_bad_addr(runner, tmp_path):
    result = runner.invoke(
        main, ["serve", "--addr", "nonsense", "--data-dir", str(tmp_path / "d")]
    )
    assert result.exit_code == 2
    assert "host:port" in result.output


def test_taxonomy_show_single_technique(runner):
    result = runner.invoke(main, ["taxonomy", "show", "T0002"])
    assert result.exit_code == 0
    assert result.output.strip() == "Facilitate State Propaganda / TA02 Plan Objectives / PLAN"

    result = runner.invoke(main, ["taxonomy", "show", "T0002", "--json"])
    payload = json.loads(result.output)
    assert payload["tactic"]["slug"] == "plan-objectives"
    assert payload["phase"] == "PLAN"


def test_taxonomy_show_unknown_exit_1(runner):
    result = runner.invoke(main, ["taxonomy", "show", "T9999"])
    assert result.exit_code == 1


def test_taxonomy_listing_covers_matrix(runner, taxonomy):
    result = runner.invoke(main, ["taxonomy", "show"])
    assert result.exit_code == 0
    for technique_id in taxonomy.techniques:
        assert technique_id in result.output


def test_remote_ingest_and_connector_flow(runner, tmp_path, taxonomy, catalog):
    server_store = Store(str(tmp_path / "server"))
    app = create_app(server_store, taxonomy, catalog=catalog, api_keys={"k": "submitter"})
    corpus = build_corpus(taxonomy, 4, seed=17)
    csv_path = tmp_path / "corpus.csv"
    csv_path.write_text(to_csv(corpus))
    with ServerThread(app) as base_url:
        result = runner.invoke(
            main,
            ["ingest-csv", str(csv_path), "--server", base_url, "--api-key", "k", "--json"],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["added"] == 4

        mirror_dir = str(tmp_path / "mirror")
        result = runner.invoke(
            main,
            ["connector", "once", "--endpoint", base_url, "--mirror-dir", mirror_dir, "--json"],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["imported_new"] == server_store.object_count
        assert os.path.exists(os.path.join(mirror_dir, "connector-state.json"))

        out_dir = str(tmp_path / "bundles")
        result = runner.invoke(
            main, ["connector", "export", "--mirror-dir", mirror_dir, "--out-dir", out_dir]
        )
        assert result.exit_code == 0, result.output
        assert len(os.listdir(out_dir)) == 4

        remote = tmp_path / "remote.json"
        incident_id = server_store.incident_ids()[0]
        result = runner.invoke(
            main,
            ["export-incident", incident_id, "--server", base_url, "--out", str(remote)],
        )
        assert result.exit_code == 0, result.output
        assert remote.read_bytes() == canonical_bundle_bytes(server_store.bundle_for(incident_id))


def test_remote_ingest_bad_key_exit_1(runner, tmp_path, taxonomy, catalog):
    app = create_app(Store(str(tmp_path / "server")), taxonomy, catalog=catalog, api_keys={})
    csv_path = tmp_path / "corpus.csv"
    csv_path.write_text(CSV)
    with ServerThread(app) as base_url:
        result = runner.invoke(
            main, ["ingest-csv", str(csv_path), "--server", base_url, "--api-key", "nope"]
        )
        assert result.exit_code == 1


def test_connector_unreachable_server_exit_1(runner, tmp_path):
    result = runner.invoke(
        main,
        [
            "connector", "once",
            "--endpoint", "http://127.0.0.1:9",
            "--mirror-dir", str(tmp_path / "mirror"),
        ],
    )
    assert result.exit_code == 1
