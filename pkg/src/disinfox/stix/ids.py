"""Deterministic STIX identifiers.

Every SDO and SRO id is a name-based (version 5) UUID under one published
namespace, so the same incident, actor, country, or relationship always gets
the same id in every process. That stability is what makes resubmission and
connector polling idempotent end to end.
"""

from __future__ import annotations

import re
import uuid

from disinfox.errors import InvalidIdentifier

# Published namespace for all ids minted by this package. Changing it changes
# every generated id, so treat it as part of the wire format.
ID_NAMESPACE = uuid.UUID("20e0cc41-79e7-447a-b197-cc0921fa3859")

SDO_TYPES = frozenset({"intrusion-set", "threat-actor", "location", "attack-pattern", "identity"})
OBJECT_TYPES = SDO_TYPES | {"relationship", "bundle"}
RELATIONSHIP_TYPES = ("uses", "attributed-to", "targets")

_STIX_ID_RE = re.compile(
    r"^([a-z][a-z0-9-]*)--"
    r"([0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12})$"
)


def normalize_key(key: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return re.sub(r"\s+", " ", key.strip().lower())


def deterministic_id(object_type: str, key: str) -> str:
    """Mint ``<type>--<uuidv5>`` from the namespace and ``<type>|<normalized key>``."""
    if object_type not in OBJECT_TYPES:
        raise InvalidIdentifier(f"unknown STIX object type: {object_type!r}")
    normalized = normalize_key(key)
    if not normalized:
        raise InvalidIdentifier("id key must be non-empty")
    return f"{object_type}--{uuid.uuid5(ID_NAMESPACE, f'{object_type}|{normalized}')}"


def relationship_id(relationship_type: str, source_ref: str, target_ref: str) -> str:
    """Deterministic SRO id keyed by (type, source, target)."""
    return deterministic_id("relationship", f"{relationship_type}|{source_ref}|{target_ref}")


def split_stix_id(stix_id: str) -> tuple[str, str]:
    """Split ``<type>--<uuid>`` into its parts, validating the shape."""
    match = _STIX_ID_RE.match(stix_id) if isinstance(stix_id, str) else None
    if not match:
        raise InvalidIdentifier(f"not a STIX id: {stix_id!r}")
    return match[1], match[2]


def is_stix_id(value) -> bool:
    return isinstance(value, str) and _STIX_ID_RE.match(value) is not None
