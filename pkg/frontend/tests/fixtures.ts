/** Shared access to the captured server-response fixtures. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { IncidentPage, StixBundle, TaxonomyDocument } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));

export function fixtureText(name: string): string {
  return readFileSync(join(here, "fixtures", name), "utf-8");
}

export function fixtureJson<T>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

/** URFH bundle as served when every technique resolves through the DISARM catalog. */
export const urfhCatalogBundle = (): StixBundle => fixtureJson("urfh-bundle-catalog.json");

/** URFH bundle with synthesized attack-patterns and the platform identity object. */
export const urfhSynthesizedBundle = (): StixBundle => fixtureJson("urfh-bundle-synthesized.json");

export const taxonomyDocument = (): TaxonomyDocument => fixtureJson("taxonomy.json");

export const incidentsPage = (): IncidentPage => fixtureJson("incidents-page.json");
