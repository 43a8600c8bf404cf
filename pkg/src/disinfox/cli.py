"""Operator command line: server, ingestion, export, validation, connector.

Exit codes are uniform across subcommands: 0 success, 1 domain errors
(row failures, validation errors, not-found, storage), 2 usage and
configuration errors. Every subcommand takes ``--json`` for scripting.
"""

from __future__ import annotations

import functools
import json
import sys

import click
import httpx

from disinfox import __version__
from disinfox.api import create_app, load_api_keys
from disinfox.connector import (
    DEFAULT_INTERVAL,
    DEFAULT_PAGE_LIMIT,
    Connector,
    export_bundles,
)
from disinfox.errors import ConfigError, CsvHeaderError, DisinfoxError, NotFoundError
from disinfox.ingest import ingest_csv
from disinfox.stix.canonical import canonical_bundle_bytes
from disinfox.stix.catalog import load_catalog_file, load_default_catalog
from disinfox.stix.ids import is_stix_id
from disinfox.stix.validation import validate_bundle
from disinfox.store import Store
from disinfox.taxonomy import load_default_taxonomy, load_taxonomy_file

DEFAULT_ADDR = "127.0.0.1:8085"

data_dir_option = click.option(
    "--data-dir", envvar="DISINFOX_DATA_DIR", help="Store directory."
)
taxonomy_option = click.option(
    "--taxonomy-file", envvar="DISINFOX_TAXONOMY_FILE",
    help="Taxonomy JSON (defaults to the bundled DISARM subset).",
)
catalog_option = click.option(
    "--catalog-file", envvar="DISINFOX_CATALOG_FILE",
    help="Attack-pattern catalog JSON (defaults to the bundled one).",
)
json_option = click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, CsvHeaderError) as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(2) from None
        except DisinfoxError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1) from None
        except httpx.HTTPError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1) from None
    return wrapper


def _load_taxonomy(taxonomy_file):
    return load_taxonomy_file(taxonomy_file) if taxonomy_file else load_default_taxonomy()


def _load_catalog(catalog_file):
    return load_catalog_file(catalog_file) if catalog_file else load_default_catalog()


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port_text = addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise ConfigError(f"address must be host:port, got {addr!r}")
    return host, int(port_text)


def _require_data_dir(data_dir) -> str:
    if not data_dir:
        raise ConfigError("a store directory is required (--data-dir or DISINFOX_DATA_DIR)")
    return data_dir


@click.group()
@click.version_option(__version__, prog_name="disinfox")
def main():
    """Disinformation incident exchange: model, store, serve, and mirror
    DISARM-described incidents as STIX 2.1 bundles."""


@main.command()
@click.option("--addr", envvar="DISINFOX_ADDR", default=DEFAULT_ADDR, show_default=True,
              help="Bind address host:port.")
@data_dir_option
@taxonomy_option
@catalog_option
@click.option("--keys-file", envvar="DISINFOX_API_KEYS_FILE",
              help="JSON file of API keys; without it, write endpoints reject.")
@click.option("--ui-dir", envvar="DISINFOX_UI_DIR",
              help="Static web UI build to mount under /ui.")
@_exit_codes
def serve(addr, data_dir, taxonomy_file, catalog_file, keys_file, ui_dir):
    """Run the HTTP API server until interrupted."""
    import uvicorn

    host, port = _split_addr(addr)
    store = Store(_require_data_dir(data_dir))
    keys = load_api_keys(keys_file) if keys_file else {}
    if not keys:
        click.echo("warning: no API keys configured, write endpoints will reject", err=True)
    app = create_app(
        store,
        _load_taxonomy(taxonomy_file),
        catalog=_load_catalog(catalog_file),
        api_keys=keys,
        ui_dir=ui_dir,
    )
    uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="info")).run()


@main.command("ingest-csv")
@click.argument("csv_file", type=click.File("r", encoding="utf-8"))
@data_dir_option
@click.option("--server", envvar="DISINFOX_SERVER", help="Ingest remotely via the bulk endpoint.")
@click.option("--api-key", envvar="DISINFOX_API_KEY", help="Key for remote ingestion.")
@taxonomy_option
@catalog_option
@json_option
@_exit_codes
def ingest_csv_command(csv_file, data_dir, server, api_key, taxonomy_file, catalog_file, as_json):
    """Ingest an incident corpus CSV, directly or against a running server."""
    text = csv_file.read()
    if server:
        response = httpx.post(
            f"{server.rstrip('/')}/api/v1/incidents/bulk",
            content=text.encode("utf-8"),
            headers={"X-API-Key": api_key or ""},
            timeout=120.0,
        )
        if response.status_code == 400:
            raise CsvHeaderError(response.json().get("message", "bad CSV header"))
        if response.status_code != 200:
            raise DisinfoxError(f"server returned {response.status_code}: {response.text}")
        report = response.json()
    else:
        store = Store(_require_data_dir(data_dir))
        report = ingest_csv(
            text, store, _load_taxonomy(taxonomy_file), catalog=_load_catalog(catalog_file)
        ).to_dict()
    if as_json:
        click.echo(json.dumps(report, sort_keys=True))
    else:
        click.echo(
            f"added={report['added']} updated={report['updated']} "
            f"skipped={report['skipped']} row_errors={len(report['row_errors'])}"
        )
        for entry in report["row_errors"]:
            click.echo(f"  row {entry['row']}: {entry['message']}", err=True)
    raise SystemExit(1 if report["row_errors"] else 0)


@main.command("export-incident")
@click.argument("incident_id")
@click.option("--out", type=click.Path(dir_okay=False, writable=True),
              help="Output file (default: stdout).")
@data_dir_option
@click.option("--server", envvar="DISINFOX_SERVER", help="Export from a running server instead.")
@_exit_codes
def export_incident(incident_id, out, data_dir, server):
    """Write an incident's canonical STIX bundle."""
    if not is_stix_id(incident_id):
        raise ConfigError(f"malformed STIX id {incident_id!r}")
    if server:
        response = httpx.get(
            f"{server.rstrip('/')}/api/v1/incidents/{incident_id}/stix", timeout=30.0
        )
        if response.status_code == 404:
            raise NotFoundError(f"incident {incident_id} not found")
        if response.status_code != 200:
            raise DisinfoxError(f"server returned {response.status_code}: {response.text}")
        payload = response.content
    else:
        store = Store(_require_data_dir(data_dir))
        payload = canonical_bundle_bytes(store.bundle_for(incident_id))
    if out:
        with open(out, "wb") as handle:
            handle.write(payload)
        click.echo(f"wrote {out}")
    else:
        sys.stdout.buffer.write(payload + b"\n")


@main.command("validate-bundle")
@click.argument("bundle_file", type=click.File("rb"))
@json_option
@_exit_codes
def validate_bundle_command(bundle_file, as_json):
    """Validate a STIX bundle file; exit 0 iff it has no errors."""
    report = validate_bundle(bundle_file.read())
    if as_json:
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    else:
        for finding in report.errors:
            click.echo(f"ERROR {finding.rule} at {finding.where}: {finding.message}")
        for finding in report.warnings:
            click.echo(f"warning {finding.rule} at {finding.where}: {finding.message}")
        click.echo("ok" if report.ok else f"{len(report.errors)} error(s)")
    raise SystemExit(0 if report.ok else 1)


@main.group()
def connector():
    """Mirror a remote server's feed into a local store."""


def _connector_options(fn):
    fn = click.option("--endpoint", envvar="DISINFOX_CONNECTOR_ENDPOINT", required=True,
                      help="Server base URL, e.g. http://127.0.0.1:8085")(fn)
    fn = click.option("--mirror-dir", envvar="DISINFOX_CONNECTOR_MIRROR_DIR", required=True,
                      help="Local mirror store directory.")(fn)
    fn = click.option("--state-file", envvar="DISINFOX_CONNECTOR_STATE_FILE",
                      help="Cursor state path (default: <mirror-dir>/connector-state.json).")(fn)
    fn = click.option("--page-limit", envvar="DISINFOX_CONNECTOR_PAGE_LIMIT",
                      default=DEFAULT_PAGE_LIMIT, show_default=True, type=int)(fn)
    return fn


def _make_connector(endpoint, mirror_dir, state_file, page_limit) -> Connector:
    import os

    return Connector(
        endpoint,
        Store(mirror_dir),
        state_file or os.path.join(mirror_dir, "connector-state.json"),
        page_limit=page_limit,
    )


def _echo_import_report(report, as_json):
    if as_json:
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    else:
        click.echo(
            f"fetched={report.fetched} imported_new={report.imported_new} "
            f"unchanged={report.unchanged} rejected={len(report.rejected)}"
        )
        for object_id, reason in report.rejected:
            click.echo(f"  rejected {object_id}: {reason}", err=True)


@connector.command("once")
@_connector_options
@json_option
@_exit_codes
def connector_once(endpoint, mirror_dir, state_file, page_limit, as_json):
    """Run a single poll cycle."""
    report = _make_connector(endpoint, mirror_dir, state_file, page_limit).poll_once()
    _echo_import_report(report, as_json)
    raise SystemExit(1 if report.rejected else 0)


@connector.command("run")
@_connector_options
@click.option("--interval", envvar="DISINFOX_CONNECTOR_INTERVAL",
              default=DEFAULT_INTERVAL, show_default=True, type=float,
              help="Seconds between polls.")
@click.option("--max-cycles", type=int, help="Stop after this many polls (default: forever).")
@json_option
@_exit_codes
def connector_run(endpoint, mirror_dir, state_file, page_limit, interval, max_cycles, as_json):
    """Poll on a fixed interval until interrupted."""
    client = _make_connector(endpoint, mirror_dir, state_file, page_limit)
    try:
        for report in client.run(interval=interval, max_cycles=max_cycles):
            _echo_import_report(report, as_json)
    except KeyboardInterrupt:
        click.echo("interrupted, state saved", err=True)


@connector.command("export")
@click.option("--mirror-dir", envvar="DISINFOX_CONNECTOR_MIRROR_DIR", required=True)
@click.option("--out-dir", required=True, help="Directory for per-incident bundle files.")
@json_option
@_exit_codes
def connector_export(mirror_dir, out_dir, as_json):
    """Write one STIX bundle file per mirrored incident."""
    count = export_bundles(Store(mirror_dir), out_dir)
    click.echo(json.dumps({"written": count}) if as_json else f"wrote {count} bundle(s) to {out_dir}")


@main.group()
def taxonomy():
    """Inspect the DISARM taxonomy."""


@taxonomy.command("show")
@click.argument("technique_id", required=False)
@taxonomy_option
@json_option
@_exit_codes
def taxonomy_show(technique_id, taxonomy_file, as_json):
    """Describe one technique, or list the whole matrix."""
    loaded = _load_taxonomy(taxonomy_file)
    if technique_id:
        technique = loaded.lookup_technique(technique_id)
        tactic = loaded.tactic_of(technique.id)
        if as_json:
            click.echo(json.dumps({
                "id": technique.id,
                "name": technique.name,
                "description": technique.description,
                "tactic": {"id": tactic.id, "name": tactic.name, "slug": tactic.kill_chain_slug},
                "phase": tactic.phase.value,
            }, sort_keys=True))
        else:
            click.echo(f"{technique.name} / {tactic.id} {tactic.name} / {tactic.phase.value}")
    else:
        if as_json:
            click.echo(json.dumps(loaded.to_document(), sort_keys=True))
        else:
            for technique in sorted(loaded.techniques.values(), key=lambda t: t.id):
                tactic = loaded.tactic_of(technique.id)
                click.echo(f"{technique.id}  {technique.name}  ({tactic.id} {tactic.name}, {tactic.phase.value})")


if __name__ == "__main__":
    main()
