"""Feed-polling client: mirror a remote server's objects into a local store.

The poll loop pages through ``/api/v1/stix/objects`` and persists its cursor
only after a page has been durably applied to the mirror. A crash between
pages therefore re-fetches at most one page on restart, and the mirror's
canonical-equality skip turns the replay into a no-op: exactly-once effect
without any server-side bookkeeping.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional

import httpx

from disinfox.errors import ConfigError, ConnectorError
from disinfox.stix.canonical import canonical_bundle_bytes
from disinfox.stix.ids import split_stix_id
from disinfox.stix.validation import ValidationReport, _check_object
from disinfox.store import Store
from disinfox.timestamps import format_timestamp

log = logging.getLogger("disinfox.connector")

DEFAULT_INTERVAL = 60.0
DEFAULT_PAGE_LIMIT = 500


@dataclass
class ConnectorState:
    endpoint: str
    last_seq: int = 0
    last_poll_at: Optional[str] = None

    def to_dict(self) -> dict:
        return {"endpoint": self.endpoint, "last_seq": self.last_seq, "last_poll_at": self.last_poll_at}


@dataclass
class ImportReport:
    fetched: int = 0
    imported_new: int = 0
    unchanged: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fetched": self.fetched,
            "imported_new": self.imported_new,
            "unchanged": self.unchanged,
            "rejected": [{"id": object_id, "reason": reason} for object_id, reason in self.rejected],
        }


def load_state(path: str, endpoint: str) -> ConnectorState:
    """Read persisted state; a missing file or a different endpoint starts fresh
    (cursors are not portable between servers)."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError:
        return ConnectorState(endpoint=endpoint)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read connector state {path}: {exc}") from None
    if raw.get("endpoint") != endpoint:
        log.warning("state file %s is for %s, starting fresh", path, raw.get("endpoint"))
        return ConnectorState(endpoint=endpoint)
    return ConnectorState(
        endpoint=endpoint,
        last_seq=int(raw.get("last_seq", 0)),
        last_poll_at=raw.get("last_poll_at"),
    )


def save_state(path: str, state: ConnectorState) -> None:
    temp_path = path + ".tmp"
    with open(temp_path, "w", encoding="utf-8") as handle:
        json.dump(state.to_dict(), handle, sort_keys=True)
        handle.flush()
        os.fsync(handle.fileno())
    os.rename(temp_path, path)


def _screen_row(row: dict) -> Optional[str]:
    """Reason to reject a feed row, or None to accept it."""
    if not isinstance(row, dict) or not isinstance(row.get("seq"), int):
        return "row lacks a sequence number"
    if "deleted" in row:
        return None if isinstance(row["deleted"], str) else "tombstone lacks an object id"
    obj = row.get("object")
    if not isinstance(obj, dict):
        return "row lacks an object"
    probe = ValidationReport()
    _check_object(obj, "object", probe)
    if probe.errors:
        finding = probe.errors[0]
        return f"{finding.rule}: {finding.message}"
    return None


class Connector:
    def __init__(
        self,
        endpoint: str,
        mirror: Store,
        state_path: str,
        page_limit: int = DEFAULT_PAGE_LIMIT,
        timeout: float = 30.0,
    ):
        if not endpoint:
            raise ConfigError("connector endpoint is required")
        if not 1 <= page_limit <= 1000:
            raise ConfigError("page_limit must be between 1 and 1000")
        self.endpoint = endpoint.rstrip("/")
        self.mirror = mirror
        self.state_path = state_path
        self.page_limit = page_limit
        self.timeout = timeout
        self.state = load_state(state_path, self.endpoint)
        self._client = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "Connector":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # split out so tests can inject crashes at page boundaries
    def _fetch_page(self, since_seq: int) -> dict:
        try:
            response = self._client.get(
                f"{self.endpoint}/api/v1/stix/objects",
                params={"since_seq": since_seq, "limit": self.page_limit},
            )
            response.raise_for_status()
            return response.json()
        except httpx.HTTPError as exc:
            raise ConnectorError(f"feed fetch failed at seq {since_seq}: {exc}") from exc

    def _apply_page(self, rows: list[dict], report: ImportReport) -> None:
        accepted = []
        for row in rows:
            report.fetched += 1
            reason = _screen_row(row)
            if reason is None:
                accepted.append(row)
            else:
                object_id = row.get("deleted") or (row.get("object") or {}).get("id") or "?"
                report.rejected.append((str(object_id), reason))
        changed, unchanged = self.mirror.apply_feed(accepted)
        report.imported_new += changed
        report.unchanged += unchanged

    def _save_state(self) -> None:
        save_state(self.state_path, self.state)

    def poll_once(self) -> ImportReport:
        """Drain the feed from the persisted cursor to the head."""
        report = ImportReport()
        while True:
            page = self._fetch_page(self.state.last_seq)
            rows = page.get("objects")
            next_seq = page.get("next_seq")
            if not isinstance(rows, list) or not isinstance(next_seq, int):
                raise ConnectorError(f"malformed feed page at seq {self.state.last_seq}")
            self._apply_page(rows, report)
            self.state.last_seq = max(self.state.last_seq, next_seq)
            self.state.last_poll_at = format_timestamp(datetime.now(timezone.utc))
            self._save_state()
            if not page.get("more"):
                return report

    def run(
        self,
        interval: float = DEFAULT_INTERVAL,
        max_cycles: Optional[int] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> list[ImportReport]:
        """Poll forever (or for ``max_cycles``); transient failures are retried
        on the next cycle, the persisted cursor never moves backwards."""
        if interval < 1:
            raise ConfigError("poll interval must be at least 1 second")
        reports: list[ImportReport] = []
        cycle = 0
        while max_cycles is None or cycle < max_cycles:
            cycle += 1
            try:
                report = self.poll_once()
                reports.append(report)
                log.info(
                    "cycle %d: fetched=%d new=%d unchanged=%d rejected=%d",
                    cycle, report.fetched, report.imported_new,
                    report.unchanged, len(report.rejected),
                )
            except ConnectorError as exc:
                log.warning("cycle %d failed, will retry: %s", cycle, exc)
            if max_cycles is not None and cycle >= max_cycles:
                break
            sleep(interval)
        return reports


def export_bundles(mirror: Store, out_dir: str) -> int:
    """Write one canonical single-incident bundle per incident; returns count."""
    os.makedirs(out_dir, exist_ok=True)
    written = 0
    for incident_id in mirror.incident_ids():
        bundle = mirror.bundle_for(incident_id)
        _, uuid_part = split_stix_id(incident_id)
        path = os.path.join(out_dir, f"{uuid_part}.json")
        with open(path, "wb") as handle:
            handle.write(canonical_bundle_bytes(bundle))
        written += 1
    return written
