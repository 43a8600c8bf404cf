"""CSV corpus parsing and idempotent commit of incident records.

The update policy is wholesale replacement: the newest submission wins, with
``created`` timestamps preserved from the stored copies so re-submitting
identical content is a no-op all the way down to the log (no new sequence
numbers). Row failures never poison neighbouring rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import IO, Optional, Union

from disinfox.errors import (
    CsvHeaderError,
    IncidentValidationError,
    IngestAbortedError,
    StoreError,
    TechniqueNotFound,
)
from disinfox.incidents import ActorRef, CountryRef, IncidentRecord, SourceRef, new_incident
from disinfox.stix.canonical import canonical_object_bytes
from disinfox.stix.catalog import AttackPatternCatalog
from disinfox.stix.codec import Clock, encode_incident
from disinfox.store import Store
from disinfox.taxonomy import Taxonomy

CSV_HEADER = [
    "name",
    "description",
    "first_seen",
    "actor",
    "actor_type",
    "countries",
    "techniques",
    "source_url",
]
LIST_SEPARATOR = ";"


@dataclass
class IngestReport:
    added: int = 0
    updated: int = 0
    skipped: int = 0
    row_errors: list[tuple[int, str]] = field(default_factory=list)

    def count(self, disposition: str) -> None:
        if disposition == "added":
            self.added += 1
        elif disposition == "updated":
            self.updated += 1
        else:
            self.skipped += 1

    @property
    def total_rows(self) -> int:
        return self.added + self.updated + self.skipped + len(self.row_errors)

    def to_dict(self) -> dict:
        return {
            "added": self.added,
            "updated": self.updated,
            "skipped": self.skipped,
            "row_errors": [{"row": row, "message": message} for row, message in self.row_errors],
        }


def _split_list(cell: str) -> list[str]:
    return [part.strip() for part in cell.split(LIST_SEPARATOR) if part.strip()]


def parse_csv(
    source: Union[str, bytes, IO],
    taxonomy: Optional[Taxonomy] = None,
    strict: bool = False,
) -> tuple[list[IncidentRecord], list[tuple[int, str]]]:
    """Parse the incident corpus CSV into validated records.

    Raises :class:`CsvHeaderError` when the header row is absent or wrong;
    everything after that is per-row: malformed rows land in the returned
    error list (1-based file line numbers) without affecting their
    neighbours.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvHeaderError("empty file: missing header row") from None
    if [column.strip() for column in header] != CSV_HEADER:
        raise CsvHeaderError(
            f"header must be exactly {','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
        )

    records: list[IncidentRecord] = []
    errors: list[tuple[int, str]] = []
    for cells in reader:
        line = reader.line_num
        if not any(cell.strip() for cell in cells):
            continue  # blank line
        if len(cells) != len(CSV_HEADER):
            errors.append((line, f"expected {len(CSV_HEADER)} columns, got {len(cells)}"))
            continue
        row = dict(zip(CSV_HEADER, cells))
        source_url = row["source_url"].strip()
        try:
            records.append(
                new_incident(
                    name=row["name"],
                    description=row["description"],
                    first_seen=row["first_seen"].strip(),
                    actor=ActorRef(row["actor"], row["actor_type"].strip() or "unknown"),
                    countries=[CountryRef(c) for c in _split_list(row["countries"])],
                    techniques=_split_list(row["techniques"]),
                    sources=[SourceRef(source_url)] if source_url else (),
                    taxonomy=taxonomy,
                    strict=strict,
                )
            )
        except IncidentValidationError as exc:
            errors.append((line, str(exc)))
    return records, errors


def _equal_ignoring_modified(a: dict, b: dict) -> bool:
    trimmed_a = {key: value for key, value in a.items() if key != "modified"}
    trimmed_b = {key: value for key, value in b.items() if key != "modified"}
    return canonical_object_bytes(trimmed_a) == canonical_object_bytes(trimmed_b)


def commit_incident(
    record: IncidentRecord,
    store: Store,
    taxonomy: Taxonomy,
    catalog: Optional[AttackPatternCatalog] = None,
    clock: Optional[Clock] = None,
) -> tuple[str, str]:
    """Encode and commit one record; returns (incident id, disposition).

    Dispositions: ``added`` (new intrusion-set), ``updated`` (content
    differs, ``created`` preserved, ``modified`` bumped), ``unchanged``
    (canonical-equal ignoring ``modified``; nothing written).
    """
    bundle = encode_incident(record, taxonomy, catalog=catalog, clock=clock)
    incident_id = next(
        obj["id"] for obj in bundle["objects"] if obj.get("type") == "intrusion-set"
    )
    if store.get_object(incident_id) is None:
        store.put_bundle(bundle)
        return incident_id, "added"

    changed = False
    for obj in bundle["objects"]:
        stored = store.get_object(obj["id"])
        if stored is None:
            changed = True
            continue
        if "created" in stored and "created" in obj:
            obj["created"] = stored["created"]
        if _equal_ignoring_modified(obj, stored):
            if "modified" in stored and "modified" in obj:
                obj["modified"] = stored["modified"]
        else:
            changed = True
    if store.members_of(incident_id) - {obj["id"] for obj in bundle["objects"]}:
        changed = True  # members dropped since the stored version
    if not changed:
        return incident_id, "unchanged"
    store.put_bundle(bundle)
    return incident_id, "updated"


def ingest(
    records: list[IncidentRecord],
    store: Store,
    taxonomy: Taxonomy,
    catalog: Optional[AttackPatternCatalog] = None,
    clock: Optional[Clock] = None,
) -> IngestReport:
    """Commit records one incident at a time (each commit atomic).

    A storage failure aborts the batch: the raised
    :class:`IngestAbortedError` carries the report of progress so far.
    """
    report = IngestReport()
    for record in records:
        try:
            _, disposition = commit_incident(record, store, taxonomy, catalog=catalog, clock=clock)
        except TechniqueNotFound as exc:
            # encode-time miss (record validated lax); isolate like a row error
            report.row_errors.append((0, f"{record.name}: {exc}"))
            continue
        except StoreError as exc:
            raise IngestAbortedError(str(exc), report) from exc
        report.count(disposition)
    return report


def ingest_csv(
    source: Union[str, bytes, IO],
    store: Store,
    taxonomy: Taxonomy,
    catalog: Optional[AttackPatternCatalog] = None,
    clock: Optional[Clock] = None,
) -> IngestReport:
    """Parse and commit a CSV corpus; row errors and dispositions combined."""
    records, row_errors = parse_csv(source, taxonomy=taxonomy, strict=True)
    report = ingest(records, store, taxonomy, catalog=catalog, clock=clock)
    report.row_errors = sorted(row_errors + report.row_errors)
    return report
