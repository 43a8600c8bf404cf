/**
 * Client-side mirror of the server's incident validation.
 *
 * Same rules, same field names in the error map, so server 422 details and
 * local findings can drive the identical highlighting path. The server
 * remains authoritative; this only saves a round trip for obvious misses.
 */

import type { IncidentFormModel } from "./types.js";

export const ACTOR_TYPES = ["group", "individual", "nation-state", "organization", "unknown"];

const TECHNIQUE_RE = /^T\d{4}(\.\d{3})?$/;

// date, optionally time with fraction and zone; naive means UTC server-side
const TIMESTAMP_RE =
  /^(\d{4})-(\d{2})-(\d{2})(?:[Tt ](\d{2}):(\d{2}):(\d{2})(?:\.\d{1,9})?(Z|z|[+-]\d{2}:\d{2})?)?$/;

export type FieldErrors = Record<string, string>;

export function isValidTimestamp(value: string): boolean {
  const match = TIMESTAMP_RE.exec(value.trim());
  if (!match) return false;
  const [, year, month, day, hour, minute, second] = match;
  const utc = Date.UTC(Number(year), Number(month) - 1, Number(day));
  const check = new Date(utc);
  if (
    check.getUTCFullYear() !== Number(year) ||
    check.getUTCMonth() !== Number(month) - 1 ||
    check.getUTCDate() !== Number(day)
  ) {
    return false; // rolled over: month or day out of range
  }
  if (hour === undefined) return true;
  return Number(hour) < 24 && Number(minute) < 60 && Number(second) < 60;
}

export function isValidTechniqueId(value: string): boolean {
  return TECHNIQUE_RE.test(value.trim());
}

/**
 * Validate a form model; an empty result means submittable.
 *
 * Keys match the server's 422 detail fields: name, description, first_seen,
 * actor.name, actor.actor_type, techniques or techniques[i], countries[i],
 * sources[i].url.
 */
export function validateIncidentForm(form: IncidentFormModel): FieldErrors {
  const errors: FieldErrors = {};

  if (!form.name.trim()) errors["name"] = "must be non-empty";
  if (!form.description.trim()) errors["description"] = "must be non-empty";
  if (!isValidTimestamp(form.first_seen)) {
    errors["first_seen"] = "must be an RFC 3339 timestamp or date";
  }
  if (!form.actor.name.trim()) errors["actor.name"] = "must be non-empty";
  if (!ACTOR_TYPES.includes(form.actor.actor_type.trim())) {
    errors["actor.actor_type"] = `must be one of ${ACTOR_TYPES.join(", ")}`;
  }

  form.countries.forEach((country, index) => {
    if (!country.trim()) errors[`countries[${index}]`] = "must be non-empty";
  });

  if (form.techniques.length === 0) {
    errors["techniques"] = "at least one technique required";
  }
  form.techniques.forEach((technique, index) => {
    if (!isValidTechniqueId(technique)) {
      errors[`techniques[${index}]`] = `not a technique id: ${technique}`;
    }
  });

  (form.sources ?? []).forEach((source, index) => {
    if (!source.url.trim()) errors[`sources[${index}].url`] = "must be non-empty";
  });

  return errors;
}

/** Fold the server's 422 details into the same field-keyed map the local check produces. */
export function mapServerDetails(
  details: { field: string; message: string }[] | undefined,
): FieldErrors {
  const errors: FieldErrors = {};
  for (const detail of details ?? []) {
    errors[detail.field] = detail.message;
  }
  return errors;
}
