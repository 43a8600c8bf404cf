/**
 * Technique picker data shaping: the flat taxonomy document becomes
 * phase -> tactic -> technique groups, rendered as checkbox clusters.
 */

import type { TaxonomyDocument, TaxonomyTactic, TaxonomyTechnique } from "./types.js";
import { escapeHtml } from "./views.js";

export const PHASE_ORDER = ["PLAN", "PREPARE", "EXECUTE", "ASSESS"] as const;

export interface TacticGroup {
  tactic: TaxonomyTactic;
  techniques: TaxonomyTechnique[];
}

export interface PhaseGroup {
  phase: string;
  tactics: TacticGroup[];
}

/**
 * Group techniques under their tactic and tactics under their phase.
 * Phases appear in kill-chain order, tactics and techniques by id; phases
 * with no tactics in the document are omitted.
 */
export function groupTaxonomy(document: TaxonomyDocument): PhaseGroup[] {
  const byTactic = new Map<string, TaxonomyTechnique[]>();
  for (const technique of [...document.techniques].sort((a, b) => a.id.localeCompare(b.id))) {
    const bucket = byTactic.get(technique.tactic_id) ?? [];
    bucket.push(technique);
    byTactic.set(technique.tactic_id, bucket);
  }

  const groups: PhaseGroup[] = [];
  for (const phase of PHASE_ORDER) {
    const tactics = document.tactics
      .filter((tactic) => tactic.phase === phase)
      .sort((a, b) => a.id.localeCompare(b.id))
      .map((tactic) => ({ tactic, techniques: byTactic.get(tactic.id) ?? [] }));
    if (tactics.length > 0) {
      groups.push({ phase, tactics });
    }
  }
  return groups;
}

/** Checkbox picker for the submission form; selection state is re-rendered in place. */
export function renderTechniquePicker(groups: PhaseGroup[], selected: Set<string>): string {
  const parts: string[] = ['<div class="technique-picker">'];
  for (const group of groups) {
    parts.push(`<fieldset class="phase-group"><legend>${escapeHtml(group.phase)}</legend>`);
    for (const { tactic, techniques } of group.tactics) {
      parts.push(
        `<div class="tactic-group"><h4>${escapeHtml(tactic.id)} ${escapeHtml(tactic.name)}</h4>`,
      );
      for (const technique of techniques) {
        const checked = selected.has(technique.id) ? " checked" : "";
        parts.push(
          `<label class="technique-option">` +
            `<input type="checkbox" name="techniques" value="${escapeHtml(technique.id)}"${checked}>` +
            ` <code>${escapeHtml(technique.id)}</code> ${escapeHtml(technique.name)}</label>`,
        );
      }
      parts.push("</div>");
    }
    parts.push("</fieldset>");
  }
  parts.push("</div>");
  return parts.join("");
}

/** kill_chain_slug -> tactic lookup, for grouping a bundle's attack-patterns by phase. */
export function tacticsBySlug(document: TaxonomyDocument): Map<string, TaxonomyTactic> {
  const map = new Map<string, TaxonomyTactic>();
  for (const tactic of document.tactics) {
    map.set(tactic.kill_chain_slug, tactic);
  }
  return map;
}
