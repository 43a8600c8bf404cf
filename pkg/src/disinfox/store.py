"""Durable STIX object store with per-incident grouping and a change feed.

Physical layout is an append-only commit log: each committed batch becomes
one JSON-lines segment file, written to a temp name and atomically renamed
into place, so readers never observe a half-written commit. The whole log
is replayed into an in-memory index at open; segments written by another
process are picked up on the next call.

Rows carry monotonically increasing sequence numbers. The change feed
returns the live row per object id (latest put, or a tombstone), which
makes a full drain equal to the store's current contents.
"""

from __future__ import annotations

import bisect
import json
import os
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional

from filelock import FileLock, Timeout

from disinfox.errors import NotFoundError, StoreCorruptError, StoreError
from disinfox.stix.canonical import canonical_object_bytes
from disinfox.stix.catalog import external_technique_id
from disinfox.stix.ids import deterministic_id
from disinfox.stix.validation import validate_bundle
from disinfox.timestamps import format_timestamp, parse_timestamp
from datetime import datetime, timezone

SEGMENT_PREFIX = "seg-"
SEGMENT_SUFFIX = ".jsonl"
MAX_FEED_LIMIT = 1000
MAX_PAGE_SIZE = 200


@dataclass(frozen=True)
class StoredObject:
    """One live row of the change feed."""

    seq: int
    committed_at: str
    incident_id: str
    object: Optional[dict]  # None for tombstones
    object_id: str
    deleted: bool = False

    def to_dict(self) -> dict:
        row = {"seq": self.seq, "committed_at": self.committed_at, "incident_id": self.incident_id}
        if self.deleted:
            row["deleted"] = self.object_id
        else:
            row["object"] = self.object
        return row


@dataclass(frozen=True)
class FeedPage:
    objects: list[StoredObject]
    next_seq: int
    more: bool


@dataclass(frozen=True)
class IncidentSummary:
    id: str
    name: str
    actor: str
    countries: tuple[str, ...]
    technique_count: int
    first_seen: str
    modified: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "actor": self.actor,
            "countries": list(self.countries),
            "technique_count": self.technique_count,
            "first_seen": self.first_seen,
            "modified": self.modified,
        }


def _canonical_dict(obj: dict) -> dict:
    # store objects in canonical form so byte equality == canonical equality
    return json.loads(canonical_object_bytes(obj))


class Store:
    """Single-writer, many-reader store rooted at a data directory."""

    def __init__(self, path: str, lock_timeout: float = 10.0):
        self.path = os.path.abspath(path)
        os.makedirs(self.path, exist_ok=True)
        self._lock_timeout = lock_timeout
        self._write_lock = FileLock(os.path.join(self.path, "store.lock"))
        self._mutex = threading.RLock()
        self._rows: dict[str, StoredObject] = {}  # object id -> live row
        self._live_sorted: Optional[list[StoredObject]] = None
        self._next_seq = 1
        self._loaded_segments: set[str] = set()
        for name in os.listdir(self.path):
            if name.endswith(".tmp"):
                os.unlink(os.path.join(self.path, name))
        self._refresh()

    # -- log replay ---------------------------------------------------------

    def _segment_files(self) -> list[str]:
        return sorted(
            name
            for name in os.listdir(self.path)
            if name.startswith(SEGMENT_PREFIX) and name.endswith(SEGMENT_SUFFIX)
        )

    def _replay_segment(self, name: str) -> None:
        path = os.path.join(self.path, name)
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    seq = row["seq"]
                    incident_id = row["incident_id"]
                    committed_at = row["committed_at"]
                    if "deleted" in row:
                        stored = StoredObject(
                            seq=seq,
                            committed_at=committed_at,
                            incident_id=incident_id,
                            object=None,
                            object_id=row["deleted"],
                            deleted=True,
                        )
                    else:
                        stored = StoredObject(
                            seq=seq,
                            committed_at=committed_at,
                            incident_id=incident_id,
                            object=row["object"],
                            object_id=row["object"]["id"],
                        )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise StoreCorruptError(
                        f"corrupt log segment {name} at line {line_no}: {exc}"
                    ) from None
                if stored.seq < self._next_seq:
                    raise StoreCorruptError(
                        f"corrupt log segment {name} at line {line_no}: "
                        f"sequence {stored.seq} is not monotonic"
                    )
                self._rows[stored.object_id] = stored
                self._next_seq = stored.seq + 1
        self._live_sorted = None
        self._loaded_segments.add(name)

    def _refresh(self) -> None:
        with self._mutex:
            on_disk = self._segment_files()
            if not self._loaded_segments.issubset(on_disk):
                # a segment vanished under us: rebuild from scratch
                self._rows.clear()
                self._live_sorted = None
                self._next_seq = 1
                self._loaded_segments.clear()
            for name in on_disk:
                if name not in self._loaded_segments:
                    self._replay_segment(name)

    # -- commit -------------------------------------------------------------

    def _commit(self, ops: list[tuple[str, str, object]]) -> list[int]:
        """Write one segment for ``ops`` atomically; returns new seqs."""
        if not ops:
            return []
        now = format_timestamp(datetime.now(timezone.utc))
        rows = []
        seqs = []
        for op, incident_id, payload in ops:
            seq = self._next_seq
            self._next_seq += 1
            seqs.append(seq)
            if op == "delete":
                rows.append(
                    StoredObject(
                        seq=seq,
                        committed_at=now,
                        incident_id=incident_id,
                        object=None,
                        object_id=payload,
                        deleted=True,
                    )
                )
            else:
                rows.append(
                    StoredObject(
                        seq=seq,
                        committed_at=now,
                        incident_id=incident_id,
                        object=payload,
                        object_id=payload["id"],
                    )
                )
        name = f"{SEGMENT_PREFIX}{seqs[0]:016d}{SEGMENT_SUFFIX}"
        final_path = os.path.join(self.path, name)
        temp_path = final_path + ".tmp"
        with open(temp_path, "w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json.dumps(row.to_dict(), sort_keys=True, separators=(",", ":")))
                handle.write("\n")
            handle.flush()
            os.fsync(handle.fileno())
        os.rename(temp_path, final_path)
        directory = os.open(self.path, os.O_RDONLY)
        try:
            os.fsync(directory)
        finally:
            os.close(directory)
        for row in rows:
            self._rows[row.object_id] = row
        self._live_sorted = None
        self._loaded_segments.add(name)
        return seqs

    def _acquire(self):
        try:
            return self._write_lock.acquire(timeout=self._lock_timeout)
        except Timeout:
            raise StoreError(
                f"timed out waiting for the write lock on {self.path}"
            ) from None

    # -- membership helpers -------------------------------------------------

    def _live(self) -> Iterable[StoredObject]:
        return (row for row in self._rows.values() if not row.deleted)

    def _member_ids(self, incident_id: str) -> set[str]:
        """Ids reachable from an incident's live relationships, plus itself."""
        members = {incident_id}
        patterns = []
        for row in self._live():
            obj = row.object
            if obj.get("type") == "relationship" and obj.get("source_ref") == incident_id:
                members.add(row.object_id)
                target = obj.get("target_ref")
                if target:
                    members.add(target)
                    target_row = self._rows.get(target)
                    if target_row and not target_row.deleted:
                        if target_row.object.get("type") == "attack-pattern":
                            patterns.append(target_row.object)
        for pattern in patterns:
            creator = pattern.get("created_by_ref")
            if creator:
                creator_row = self._rows.get(creator)
                if creator_row and not creator_row.deleted:
                    members.add(creator)
        return members

    def _referenced_by_others(self, incident_id: str) -> set[str]:
        """Union of every other live incident's membership closure."""
        referenced: set[str] = set()
        for other_id in self.incident_ids():
            if other_id != incident_id:
                referenced |= self._member_ids(other_id)
        return referenced

    # -- public API ---------------------------------------------------------

    def put_bundle(self, bundle: dict) -> tuple[str, list[int]]:
        """Commit a single-incident bundle atomically.

        Objects whose canonical bytes are unchanged are not re-sequenced.
        Members of a previous version of the incident that are neither in
        the new bundle nor referenced by another incident are tombstoned.
        """
        report = validate_bundle(bundle, single_incident=True)
        if not report.ok:
            first = report.errors[0]
            raise StoreError(
                f"bundle rejected: {first.rule} at {first.where}: {first.message}"
                + (f" (+{len(report.errors) - 1} more)" if len(report.errors) > 1 else "")
            )
        objects = [obj for obj in bundle["objects"] if isinstance(obj, dict)]
        incident_id = next(obj["id"] for obj in objects if obj.get("type") == "intrusion-set")

        with self._acquire(), self._mutex:
            self._refresh()
            new_ids = set()
            ops: list[tuple[str, str, object]] = []
            for obj in sorted(objects, key=lambda o: o["id"]):
                canonical = _canonical_dict(obj)
                new_ids.add(canonical["id"])
                existing = self._rows.get(canonical["id"])
                if existing is not None and not existing.deleted and existing.object == canonical:
                    continue
                ops.append(("put", incident_id, canonical))
            previous = self._rows.get(incident_id)
            if previous is not None and not previous.deleted:
                stale = self._member_ids(incident_id) - new_ids
                if stale:
                    referenced = self._referenced_by_others(incident_id)
                    for stale_id in sorted(stale - referenced):
                        row = self._rows.get(stale_id)
                        if row is not None and not row.deleted:
                            ops.append(("delete", incident_id, stale_id))
            return incident_id, self._commit(ops)

    def apply_feed(self, rows: list[dict]) -> tuple[int, int]:
        """Upsert feed rows from a remote store; returns (changed, unchanged).

        A put row whose object is canonical-equal to the local copy, or a
        tombstone for an object not present, leaves the store untouched.
        One atomic segment per call.
        """
        with self._acquire(), self._mutex:
            self._refresh()
            ops: list[tuple[str, str, object]] = []
            staged: dict[str, Optional[dict]] = {}
            unchanged = 0
            for row in rows:
                incident_id = row.get("incident_id") or ""
                if "deleted" in row:
                    object_id = row["deleted"]
                    if object_id in staged:
                        current = staged[object_id]
                    else:
                        existing = self._rows.get(object_id)
                        current = existing.object if existing and not existing.deleted else None
                    if current is None:
                        unchanged += 1
                        continue
                    staged[object_id] = None
                    ops.append(("delete", incident_id, object_id))
                else:
                    canonical = _canonical_dict(row["object"])
                    object_id = canonical["id"]
                    if object_id in staged:
                        current = staged[object_id]
                    else:
                        existing = self._rows.get(object_id)
                        current = existing.object if existing and not existing.deleted else None
                    if current == canonical:
                        unchanged += 1
                        continue
                    staged[object_id] = canonical
                    ops.append(("put", incident_id, canonical))
            self._commit(ops)
            return len(ops), unchanged

    def delete_incident(self, incident_id: str) -> list[str]:
        """Tombstone an incident and its no-longer-referenced members."""
        with self._acquire(), self._mutex:
            self._refresh()
            row = self._rows.get(incident_id)
            if row is None or row.deleted:
                raise NotFoundError(f"incident {incident_id} not found")
            removed = []
            ops: list[tuple[str, str, object]] = []
            referenced = self._referenced_by_others(incident_id)
            for member_id in sorted(self._member_ids(incident_id)):
                member = self._rows.get(member_id)
                if member is None or member.deleted:
                    continue
                if member_id != incident_id and member_id in referenced:
                    continue
                ops.append(("delete", incident_id, member_id))
                removed.append(member_id)
            self._commit(ops)
            return removed

    def get_object(self, object_id: str) -> Optional[dict]:
        with self._mutex:
            self._refresh()
            row = self._rows.get(object_id)
            return row.object if row is not None and not row.deleted else None

    def members_of(self, incident_id: str) -> set[str]:
        """Live object ids belonging to an incident (its closure)."""
        with self._mutex:
            self._refresh()
            row = self._rows.get(incident_id)
            if row is None or row.deleted:
                raise NotFoundError(f"incident {incident_id} not found")
            return {
                member_id
                for member_id in self._member_ids(incident_id)
                if (m := self._rows.get(member_id)) is not None and not m.deleted
            }

    def incident_ids(self) -> list[str]:
        with self._mutex:
            self._refresh()
            return sorted(
                row.object_id for row in self._live() if row.object.get("type") == "intrusion-set"
            )

    def _summary(self, incident_id: str) -> IncidentSummary:
        intrusion_set = self._rows[incident_id].object
        actor = ""
        countries = []
        technique_count = 0
        for member_id in self._member_ids(incident_id):
            row = self._rows.get(member_id)
            if row is None or row.deleted or row.object_id == incident_id:
                continue
            obj = row.object
            if obj.get("type") == "threat-actor":
                actor = obj.get("name") or ""
            elif obj.get("type") == "location":
                countries.append(obj.get("country") or obj.get("name") or "")
            elif obj.get("type") == "attack-pattern":
                technique_count += 1
        return IncidentSummary(
            id=incident_id,
            name=intrusion_set.get("name") or "",
            actor=actor,
            countries=tuple(sorted(countries, key=str.casefold)),
            technique_count=technique_count,
            first_seen=intrusion_set.get("first_seen") or "",
            modified=intrusion_set.get("modified") or intrusion_set.get("created") or "",
        )

    def list_incidents(
        self,
        page: int = 1,
        page_size: int = 50,
        actor: Optional[str] = None,
        country: Optional[str] = None,
        technique: Optional[str] = None,
    ) -> tuple[list[IncidentSummary], int]:
        """Stable listing ordered by (modified desc, id asc); filters conjunctive."""
        if page < 1:
            raise ValueError("page must be >= 1")
        if not 1 <= page_size <= MAX_PAGE_SIZE:
            raise ValueError(f"page_size must be between 1 and {MAX_PAGE_SIZE}")
        with self._mutex:
            self._refresh()
            summaries = [self._summary(incident_id) for incident_id in self.incident_ids()]
        if actor is not None:
            summaries = [s for s in summaries if s.actor.casefold() == actor.casefold()]
        if country is not None:
            summaries = [
                s for s in summaries if any(c.casefold() == country.casefold() for c in s.countries)
            ]
        if technique is not None:
            wanted = technique.strip().upper()
            with self._mutex:
                summaries = [
                    s for s in summaries if wanted in self._technique_ids(s.id)
                ]
        summaries.sort(key=lambda s: (_sort_instant(s.modified), s.id))
        total = len(summaries)
        start = (page - 1) * page_size
        return summaries[start : start + page_size], total

    def _technique_ids(self, incident_id: str) -> set[str]:
        found = set()
        for member_id in self._member_ids(incident_id):
            row = self._rows.get(member_id)
            if row is None or row.deleted:
                continue
            if row.object.get("type") == "attack-pattern":
                external_id = external_technique_id(row.object)
                if external_id:
                    found.add(external_id.upper())
        return found

    def bundle_for(self, incident_id: str) -> dict:
        """Referentially closed single-incident bundle, canonical member order."""
        with self._mutex:
            self._refresh()
            row = self._rows.get(incident_id)
            if row is None or row.deleted:
                raise NotFoundError(f"incident {incident_id} not found")
            objects = []
            for member_id in sorted(self._member_ids(incident_id)):
                member = self._rows.get(member_id)
                if member is not None and not member.deleted:
                    objects.append(member.object)
            return {
                "type": "bundle",
                "id": deterministic_id("bundle", incident_id),
                "objects": objects,
            }

    def objects_since(self, cursor: int = 0, limit: int = 500) -> FeedPage:
        """Live rows with seq > cursor, ascending, at most ``limit``."""
        if cursor < 0:
            raise ValueError("cursor must be >= 0")
        if not 1 <= limit <= MAX_FEED_LIMIT:
            raise ValueError(f"limit must be between 1 and {MAX_FEED_LIMIT}")
        with self._mutex:
            self._refresh()
            if self._live_sorted is None:
                self._live_sorted = sorted(self._rows.values(), key=lambda row: row.seq)
            rows = self._live_sorted
            start = bisect.bisect_right(rows, cursor, key=lambda row: row.seq)
            page = rows[start : start + limit]
            remaining = len(rows) - start
        return FeedPage(
            objects=page,
            next_seq=page[-1].seq if page else cursor,
            more=remaining > limit,
        )

    # -- counters -----------------------------------------------------------

    @property
    def head_seq(self) -> int:
        with self._mutex:
            self._refresh()
            return self._next_seq - 1

    @property
    def object_count(self) -> int:
        with self._mutex:
            self._refresh()
            return sum(1 for _ in self._live())

    @property
    def incident_count(self) -> int:
        return len(self.incident_ids())


def _sort_instant(text: str):
    """Descending-time sort key that tolerates blank timestamps."""
    try:
        return -parse_timestamp(text).timestamp()
    except (ValueError, TypeError):
        return float("inf")
