"""Canonical JSON serialization for STIX documents.

One byte encoding per structural value: object keys sorted at every level, no
insignificant whitespace, timestamps in canonical RFC 3339 UTC form with six
fractional digits, and bundle objects sorted by id. Canonical bytes are what
the store hashes for change detection and what equality checks compare.
"""

from __future__ import annotations

import json

from disinfox.timestamps import canonicalize_timestamp

TIMESTAMP_FIELDS = frozenset(
    {"created", "modified", "first_seen", "last_seen", "valid_from", "valid_until"}
)


def _canonicalize(value, key: str | None = None):
    if isinstance(value, dict):
        return {k: _canonicalize(v, k) for k, v in value.items()}
    if isinstance(value, list):
        return [_canonicalize(item) for item in value]
    if key in TIMESTAMP_FIELDS and isinstance(value, str):
        try:
            return canonicalize_timestamp(value)
        except ValueError:
            return value  # leave unparseable foreign values alone; validation reports them
    return value


def _dump(value) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def canonical_object_bytes(obj: dict) -> bytes:
    """Canonical bytes of a single STIX object."""
    return _dump(_canonicalize(obj))


def canonical_bundle_bytes(bundle: dict) -> bytes:
    """Canonical bytes of a bundle; objects are ordered by id."""
    normalized = _canonicalize(bundle)
    objects = normalized.get("objects")
    if isinstance(objects, list):
        normalized["objects"] = sorted(
            objects, key=lambda obj: obj.get("id", "") if isinstance(obj, dict) else ""
        )
    return _dump(normalized)


def canonical_equal(a: dict, b: dict) -> bool:
    """Structural equality under canonicalization (bundles or single objects)."""
    if isinstance(a, dict) and a.get("type") == "bundle":
        return canonical_bundle_bytes(a) == canonical_bundle_bytes(b)
    return canonical_object_bytes(a) == canonical_object_bytes(b)
