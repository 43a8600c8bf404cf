"""STIX 2.1 translation layer: deterministic ids, canonical bytes, codec."""

from disinfox.stix.ids import (
    ID_NAMESPACE,
    RELATIONSHIP_TYPES,
    SDO_TYPES,
    deterministic_id,
    relationship_id,
    split_stix_id,
)
from disinfox.stix.canonical import (
    canonical_bundle_bytes,
    canonical_equal,
    canonical_object_bytes,
)
from disinfox.stix.catalog import (
    AttackPatternCatalog,
    external_technique_id,
    load_attack_pattern_catalog,
    load_catalog_file,
    load_default_catalog,
)
from disinfox.stix.validation import Finding, ValidationReport, validate_bundle
from disinfox.stix.codec import decode_bundle, encode_incident

__all__ = [
    "AttackPatternCatalog",
    "Finding",
    "ID_NAMESPACE",
    "RELATIONSHIP_TYPES",
    "SDO_TYPES",
    "ValidationReport",
    "canonical_bundle_bytes",
    "canonical_equal",
    "canonical_object_bytes",
    "decode_bundle",
    "deterministic_id",
    "encode_incident",
    "external_technique_id",
    "load_attack_pattern_catalog",
    "load_catalog_file",
    "load_default_catalog",
    "relationship_id",
    "split_stix_id",
    "validate_bundle",
]
