"""disinfox: a disinformation threat-intelligence exchange stack.

Models disinformation incidents against the DISARM matrix, encodes them as
STIX 2.1 bundles with deterministic identifiers, persists them in an
append-only document store with a monotonic change feed, serves them over an
HTTP exchange API, and mirrors them with an idempotent polling connector.
"""

__version__ = "0.1.0"

from disinfox.taxonomy import Taxonomy, load_taxonomy, load_default_taxonomy
from disinfox.incidents import ActorRef, CountryRef, IncidentRecord, SourceRef, new_incident

__all__ = [
    "ActorRef",
    "CountryRef",
    "IncidentRecord",
    "SourceRef",
    "Taxonomy",
    "load_default_taxonomy",
    "load_taxonomy",
    "new_incident",
    "__version__",
]
