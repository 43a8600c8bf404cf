/**
 * Payload shapes of the exchange HTTP API.
 *
 * These mirror the server's JSON exactly; the UI renders them as-is and
 * never derives counts or relations the server already provides.
 */

export interface HealthInfo {
  status: string;
  version: string;
  incident_count: number;
  head_seq: number;
}

export interface TaxonomyTactic {
  id: string;
  name: string;
  phase: "PLAN" | "PREPARE" | "EXECUTE" | "ASSESS";
  kill_chain_slug: string;
}

export interface TaxonomyTechnique {
  id: string;
  name: string;
  description: string;
  tactic_id: string;
  reference_url: string;
}

export interface TaxonomyDocument {
  version: string;
  tactics: TaxonomyTactic[];
  techniques: TaxonomyTechnique[];
}

export interface IncidentSummary {
  id: string;
  name: string;
  actor: string;
  countries: string[];
  technique_count: number;
  first_seen: string;
  modified: string;
}

export interface IncidentPage {
  items: IncidentSummary[];
  total: number;
  page: number;
  page_size: number;
}

export interface IncidentListFilters {
  page?: number;
  page_size?: number;
  actor?: string;
  country?: string;
  technique?: string;
}

/** Domain JSON accepted by POST /api/v1/incidents. */
export interface IncidentFormModel {
  name: string;
  description: string;
  first_seen: string;
  actor: { name: string; actor_type: string };
  countries: string[];
  techniques: string[];
  labels?: string[];
  sources?: { url: string; title?: string }[];
}

export interface SubmitResult {
  id: string;
  disposition: "added" | "updated" | "unchanged";
  incident: IncidentFormModel;
}

export interface BulkReport {
  added: number;
  updated: number;
  skipped: number;
  row_errors: { row: number; message: string }[];
}

/** Every non-2xx response body. */
export interface ErrorBody {
  code: string;
  message: string;
  details?: { field: string; message: string }[];
}

export interface StixObject {
  type: string;
  id: string;
  name?: string;
  description?: string;
  created?: string;
  modified?: string;
  relationship_type?: string;
  source_ref?: string;
  target_ref?: string;
  labels?: string[];
  external_references?: { source_name: string; external_id?: string; url?: string }[];
  kill_chain_phases?: { kill_chain_name: string; phase_name: string }[];
  [extra: string]: unknown;
}

export interface StixBundle {
  type: "bundle";
  id: string;
  objects: StixObject[];
}
