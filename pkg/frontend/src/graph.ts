/**
 * Entity-relationship graph of a STIX bundle.
 *
 * Nodes are exactly the bundle's SDOs and edges exactly its SROs; nothing
 * is synthesized or dropped. Layout is force-directed with a seeded PRNG,
 * so the same bundle and seed always produce the same SVG markup.
 */

import type { StixBundle, StixObject } from "./types.js";

export interface GraphNode {
  id: string;
  type: string;
  label: string;
}

export interface GraphEdge {
  id: string;
  source: string;
  target: string;
  label: string;
}

export interface GraphModel {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface LayoutOptions {
  width?: number;
  height?: number;
  seed?: number;
  iterations?: number;
}

function labelOf(object: StixObject): string {
  if (typeof object.name === "string" && object.name) return object.name;
  return object.id.split("--")[0];
}

/** One node per SDO, one edge per SRO, in bundle order. */
export function buildGraph(bundle: StixBundle): GraphModel {
  const nodes: GraphNode[] = [];
  const edges: GraphEdge[] = [];
  for (const object of bundle.objects) {
    if (object.type === "relationship") {
      edges.push({
        id: object.id,
        source: object.source_ref ?? "",
        target: object.target_ref ?? "",
        label: object.relationship_type ?? "related-to",
      });
    } else {
      nodes.push({ id: object.id, type: object.type, label: labelOf(object) });
    }
  }
  return { nodes, edges };
}

/** Deterministic 32-bit PRNG (mulberry32); good enough to scatter initial positions. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

interface Point {
  x: number;
  y: number;
}

/**
 * Fruchterman-Reingold style iteration: pairwise repulsion, spring
 * attraction along edges, mild centering, cooling step cap. Pure
 * arithmetic over seeded starting positions keeps it reproducible.
 */
export function layoutGraph(model: GraphModel, options: LayoutOptions = {}): Map<string, Point> {
  const width = options.width ?? 640;
  const height = options.height ?? 480;
  const iterations = options.iterations ?? 150;
  const random = mulberry32(options.seed ?? 42);

  const positions = new Map<string, Point>();
  for (const node of model.nodes) {
    positions.set(node.id, {
      x: (random() - 0.5) * width,
      y: (random() - 0.5) * height,
    });
  }
  if (model.nodes.length <= 1) {
    for (const point of positions.values()) {
      point.x = width / 2;
      point.y = height / 2;
    }
    return positions;
  }

  const area = width * height;
  const k = Math.sqrt(area / model.nodes.length);
  const springs = model.edges
    .filter((edge) => positions.has(edge.source) && positions.has(edge.target))
    .map((edge) => [edge.source, edge.target] as const);

  for (let step = 0; step < iterations; step++) {
    const temperature = (width / 10) * (1 - step / iterations) + 1;
    const forces = new Map<string, Point>();
    for (const node of model.nodes) forces.set(node.id, { x: 0, y: 0 });

    for (let i = 0; i < model.nodes.length; i++) {
      for (let j = i + 1; j < model.nodes.length; j++) {
        const a = positions.get(model.nodes[i].id)!;
        const b = positions.get(model.nodes[j].id)!;
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let distance = Math.hypot(dx, dy);
        if (distance < 0.01) {
          // coincident points: split deterministically by index
          dx = 0.01 * (i - j);
          dy = 0.01;
          distance = Math.hypot(dx, dy);
        }
        const repulsion = (k * k) / distance;
        const fa = forces.get(model.nodes[i].id)!;
        const fb = forces.get(model.nodes[j].id)!;
        fa.x += (dx / distance) * repulsion;
        fa.y += (dy / distance) * repulsion;
        fb.x -= (dx / distance) * repulsion;
        fb.y -= (dy / distance) * repulsion;
      }
    }

    for (const [sourceId, targetId] of springs) {
      const a = positions.get(sourceId)!;
      const b = positions.get(targetId)!;
      const dx = a.x - b.x;
      const dy = a.y - b.y;
      const distance = Math.max(Math.hypot(dx, dy), 0.01);
      const attraction = (distance * distance) / k;
      const fa = forces.get(sourceId)!;
      const fb = forces.get(targetId)!;
      fa.x -= (dx / distance) * attraction;
      fa.y -= (dy / distance) * attraction;
      fb.x += (dx / distance) * attraction;
      fb.y += (dy / distance) * attraction;
    }

    for (const node of model.nodes) {
      const point = positions.get(node.id)!;
      const force = forces.get(node.id)!;
      force.x -= point.x * 0.03; // centering pull
      force.y -= point.y * 0.03;
      const magnitude = Math.max(Math.hypot(force.x, force.y), 0.01);
      const limited = Math.min(magnitude, temperature);
      point.x += (force.x / magnitude) * limited;
      point.y += (force.y / magnitude) * limited;
    }
  }

  // scale into the viewport with a margin
  const xs = [...positions.values()].map((p) => p.x);
  const ys = [...positions.values()].map((p) => p.y);
  const margin = 40;
  const spanX = Math.max(Math.max(...xs) - Math.min(...xs), 1);
  const spanY = Math.max(Math.max(...ys) - Math.min(...ys), 1);
  const minX = Math.min(...xs);
  const minY = Math.min(...ys);
  for (const point of positions.values()) {
    point.x = margin + ((point.x - minX) / spanX) * (width - 2 * margin);
    point.y = margin + ((point.y - minY) / spanY) * (height - 2 * margin);
  }
  return positions;
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function shortLabel(label: string, limit = 28): string {
  return label.length > limit ? `${label.slice(0, limit - 1)}…` : label;
}

const NODE_RADIUS: Record<string, number> = {
  "intrusion-set": 14,
  "threat-actor": 11,
  location: 10,
  "attack-pattern": 8,
  identity: 8,
};

/**
 * Render the bundle graph as standalone SVG markup.
 *
 * String output keeps rendering testable without a DOM and trivially
 * deterministic: coordinates are rounded, attributes emitted in one order.
 */
export function renderGraphSvg(bundle: StixBundle, options: LayoutOptions = {}): string {
  const width = options.width ?? 640;
  const height = options.height ?? 480;
  const model = buildGraph(bundle);
  const positions = layoutGraph(model, { ...options, width, height });

  const parts: string[] = [];
  parts.push(
    `<svg class="bundle-graph" viewBox="0 0 ${width} ${height}" ` +
      `xmlns="http://www.w3.org/2000/svg" role="img">`,
  );

  for (const edge of model.edges) {
    const a = positions.get(edge.source);
    const b = positions.get(edge.target);
    if (!a || !b) continue; // dangling ref: nothing to draw, never invent a node
    parts.push(
      `<line class="edge edge-${escapeXml(edge.label)}" ` +
        `x1="${a.x.toFixed(1)}" y1="${a.y.toFixed(1)}" ` +
        `x2="${b.x.toFixed(1)}" y2="${b.y.toFixed(1)}">` +
        `<title>${escapeXml(edge.label)}</title></line>`,
    );
  }

  for (const node of model.nodes) {
    const point = positions.get(node.id)!;
    const radius = NODE_RADIUS[node.type] ?? 7;
    parts.push(
      `<g class="node node-${escapeXml(node.type)}" data-id="${escapeXml(node.id)}">` +
        `<circle cx="${point.x.toFixed(1)}" cy="${point.y.toFixed(1)}" r="${radius}">` +
        `<title>${escapeXml(`${node.type}: ${node.label}`)}</title></circle>` +
        `<text x="${point.x.toFixed(1)}" y="${(point.y + radius + 12).toFixed(1)}">` +
        `${escapeXml(shortLabel(node.label))}</text></g>`,
    );
  }

  parts.push("</svg>");
  return parts.join("");
}
