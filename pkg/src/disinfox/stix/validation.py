"""Bundle validation with stable rule codes.

All findings go into a report; nothing raises. A bundle is accepted iff the
report has no errors. Rule codes (stable, scriptable):

  ``json``               document is not well-formed JSON
  ``bundle-structure``   top level is not a bundle with an objects array
  ``id-format``          an id is not ``<type>--<lowercase uuid>``
  ``id-type-mismatch``   id prefix disagrees with the object's type
  ``duplicate-id``       the same id appears twice in one bundle
  ``spec-version``       an SDO lacks ``spec_version``
  ``relationship-type``  relationship_type outside {uses, attributed-to, targets}
  ``dangling-ref``       a relationship references an id absent from the bundle
  ``timestamp-format``   created/modified not parseable
  ``timestamp-order``    modified earlier than created
  ``labels``             an intrusion-set is missing the mandatory labels
  ``single-incident``    not exactly one intrusion-set (only when requested)
  ``unknown-type``       object type outside this codec's vocabulary (warning)
  ``spec-version-value`` spec_version present but not "2.1" (warning)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

from disinfox.stix.ids import RELATIONSHIP_TYPES, SDO_TYPES, split_stix_id
from disinfox.errors import InvalidIdentifier
from disinfox.timestamps import parse_timestamp

MANDATORY_INCIDENT_LABELS = ("incident", "disinformation")


@dataclass(frozen=True)
class Finding:
    where: str  # object id, or "objects[i]" when the id itself is unusable
    rule: str
    message: str


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, where: str, rule: str, message: str) -> None:
        self.errors.append(Finding(where, rule, message))

    def warn(self, where: str, rule: str, message: str) -> None:
        self.warnings.append(Finding(where, rule, message))

    def error_rules(self) -> set[str]:
        return {finding.rule for finding in self.errors}

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [vars(f) for f in self.errors],
            "warnings": [vars(f) for f in self.warnings],
        }


def _check_object(obj: dict, where: str, report: ValidationReport) -> None:
    object_type = obj.get("type")
    object_id = obj.get("id")

    if not isinstance(object_id, str):
        report.error(where, "id-format", "object has no id")
        return
    try:
        prefix, _ = split_stix_id(object_id)
    except InvalidIdentifier:
        report.error(where, "id-format", f"malformed id {object_id!r}")
        return
    if object_id != object_id.lower():
        report.error(object_id, "id-format", "id must be lowercase")
    if prefix != object_type:
        report.error(object_id, "id-type-mismatch", f"id prefix {prefix!r} vs type {object_type!r}")
        return

    if object_type in SDO_TYPES and "spec_version" not in obj:
        report.error(object_id, "spec-version", "SDO missing spec_version")
    elif "spec_version" in obj and obj["spec_version"] != "2.1":
        report.warn(object_id, "spec-version-value", f"spec_version {obj['spec_version']!r}")

    created, modified = obj.get("created"), obj.get("modified")
    timestamps = {}
    for field_name, value in (("created", created), ("modified", modified)):
        if value is None:
            continue
        try:
            timestamps[field_name] = parse_timestamp(value)
        except ValueError:
            report.error(object_id, "timestamp-format", f"unparseable {field_name}: {value!r}")
    if "created" in timestamps and "modified" in timestamps:
        if timestamps["modified"] < timestamps["created"]:
            report.error(object_id, "timestamp-order", "modified earlier than created")

    if object_type == "intrusion-set":
        labels = obj.get("labels") or []
        missing = [label for label in MANDATORY_INCIDENT_LABELS if label not in labels]
        if missing:
            report.error(object_id, "labels", f"intrusion-set missing labels {missing}")

    if object_type == "relationship":
        relationship_type = obj.get("relationship_type")
        if relationship_type not in RELATIONSHIP_TYPES:
            report.error(
                object_id,
                "relationship-type",
                f"relationship_type {relationship_type!r} not in "
                f"{{{', '.join(RELATIONSHIP_TYPES)}}}",
            )
    elif object_type not in SDO_TYPES:
        report.warn(object_id, "unknown-type", f"object type {object_type!r} outside vocabulary")


def validate_bundle(document: Union[bytes, str, dict], single_incident: bool = False) -> ValidationReport:
    """Validate a STIX bundle; returns a report, never raises.

    ``document`` may be raw JSON bytes/text or an already-parsed bundle.
    With ``single_incident=True`` the bundle must contain exactly one
    intrusion-set (the per-incident export contract).
    """
    report = ValidationReport()

    if isinstance(document, (bytes, str)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            report.error("document", "json", f"not well-formed JSON: {exc}")
            return report

    if not isinstance(document, dict) or document.get("type") != "bundle":
        report.error("document", "bundle-structure", "top level is not a bundle")
        return report
    bundle_id = document.get("id")
    if not isinstance(bundle_id, str):
        report.error("document", "bundle-structure", "bundle has no id")
    else:
        try:
            prefix, _ = split_stix_id(bundle_id)
            if prefix != "bundle":
                report.error(bundle_id, "id-type-mismatch", "bundle id prefix is not 'bundle'")
        except InvalidIdentifier:
            report.error(bundle_id, "id-format", "malformed bundle id")
    objects = document.get("objects")
    if not isinstance(objects, list):
        report.error("document", "bundle-structure", "bundle has no objects array")
        return report

    ids_seen: set[str] = set()
    intrusion_sets = 0
    for index, obj in enumerate(objects):
        where = f"objects[{index}]"
        if not isinstance(obj, dict):
            report.error(where, "bundle-structure", "bundle entry is not an object")
            continue
        _check_object(obj, where, report)
        object_id = obj.get("id")
        if isinstance(object_id, str):
            if object_id in ids_seen:
                report.error(object_id, "duplicate-id", "id appears more than once in bundle")
            ids_seen.add(object_id)
        if obj.get("type") == "intrusion-set":
            intrusion_sets += 1

    for obj in objects:
        if isinstance(obj, dict) and obj.get("type") == "relationship":
            relationship_id = obj.get("id", "relationship")
            for ref_field in ("source_ref", "target_ref"):
                ref = obj.get(ref_field)
                if not isinstance(ref, str):
                    report.error(relationship_id, "dangling-ref", f"missing {ref_field}")
                elif ref not in ids_seen:
                    report.error(
                        relationship_id, "dangling-ref", f"dangling reference: {ref_field} {ref}"
                    )

    if single_incident and intrusion_sets != 1:
        report.error(
            bundle_id if isinstance(bundle_id, str) else "document",
            "single-incident",
            f"expected exactly 1 intrusion-set, found {intrusion_sets}",
        )
    return report
