/** Orbital-ring view model: one labeled node per active odorant.
 *
 * Every number shown on a node comes from the API: ratios from the turn
 * payload, cycle length and odorant metadata from the palette. Durations
 * are the ratio's share of the cycle; because the two-decimal ratios sum
 * to exactly 1.00, node durations always sum to the cycle length.
 */

import type { PaletteDoc, PaletteOdorant, TurnPayload } from "./api.js";

export interface OrbitalNode {
  name: string;
  ratio: string; // two-decimal string straight from the API
  durationSeconds: number;
  angleRadians: number;
  color: string;
}

export const CATEGORY_COLORS: Record<string, string> = {
  sweet: "#e4587c",
  savory: "#c98a2d",
  sour: "#b5c62e",
  burnt_smoked: "#7a5240",
  fresh: "#3aa66b",
  chemical_artificial: "#5d7fd3",
};

const FALLBACK_COLOR = "#888888";

export function nodeColor(odorant: PaletteOdorant): string {
  const category = odorant.categories[0];
  return (category && CATEGORY_COLORS[category]) ?? FALLBACK_COLOR;
}

/** Dispensing order: most volatile first, channel breaking ties. */
function scheduleOrder(a: PaletteOdorant, b: PaletteOdorant): number {
  if (a.volatility !== b.volatility) return b.volatility - a.volatility;
  return a.location - b.location;
}

export function buildOrbital(
  palette: PaletteDoc,
  turn: TurnPayload,
): OrbitalNode[] {
  const byName = new Map(palette.odorants.map((o) => [o.name, o]));
  const active: PaletteOdorant[] = [];
  for (const [name, ratio] of Object.entries(turn.ratios)) {
    const odorant = byName.get(name);
    if (!odorant) throw new Error(`unknown odorant in turn: ${name}`);
    if (Number(ratio) > 0) active.push(odorant);
  }
  active.sort(scheduleOrder);

  const spacing = (2 * Math.PI) / Math.max(active.length, 1);
  return active.map((odorant, index) => {
    const ratio = turn.ratios[odorant.name]!;
    return {
      name: odorant.name,
      ratio,
      durationSeconds: Number(ratio) * palette.cycle_seconds,
      angleRadians: -Math.PI / 2 + index * spacing,
      color: nodeColor(odorant),
    };
  });
}

export function totalSeconds(nodes: OrbitalNode[]): number {
  return nodes.reduce((sum, node) => sum + node.durationSeconds, 0);
}
