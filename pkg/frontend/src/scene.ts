/**
 * Pure scene-graph construction: a view bundle in, drawable primitives out.
 *
 * Geometry is copied from the bundle verbatim. This module never adds,
 * scales, or otherwise recomputes trajectory data; the only arithmetic is
 * color encoding for the speed overlay. Color semantics are fixed: the
 * initial trajectory is blue, the adapted one red.
 */

import { SceneObjectDoc, TurnView } from "./types.js";

export const INITIAL_COLOR = "#2563eb"; // blue
export const ADAPTED_COLOR = "#dc2626"; // red
export const ZERO_SPEED_COLOR = "#9ca3af"; // paused vertices stand out as gray

export interface OverlayToggles {
  objects: boolean;
  speedColoring: boolean;
  waypointIndices: boolean;
}

export const DEFAULT_OVERLAYS: OverlayToggles = {
  objects: true,
  speedColoring: false,
  waypointIndices: false,
};

export interface Polyline {
  id: "initial" | "adapted";
  color: string;
  /** World positions, exactly the bundle's waypoint xyz columns. */
  points: [number, number, number][];
  /** The bundle's speed column, untouched. */
  speeds: number[];
  /** Per-vertex colors when the speed overlay is on, else null. */
  vertexColors: string[] | null;
}

export interface BoxItem {
  label: string;
  center: [number, number, number];
  dimensions: [number, number, number];
}

export interface TextMarker {
  text: string;
  position: [number, number, number];
}

export interface SceneGraph {
  polylines: Polyline[];
  boxes: BoxItem[];
  labels: TextMarker[];
  indexMarkers: TextMarker[];
}

function positionsOf(rows: number[][]): [number, number, number][] {
  return rows.map((r) => [r[0] as number, r[1] as number, r[2] as number]);
}

function speedsOf(rows: number[][]): number[] {
  return rows.map((r) => r[3] as number);
}

/**
 * Map speeds to colors. Zero is a fixed gray so inserted pauses are
 * visible; positive speeds ramp from dark to bright against the shared
 * maximum of both trajectories, keeping the two ramps comparable.
 */
export function speedRamp(speeds: number[], vMax: number, base: string): string[] {
  return speeds.map((v) => {
    if (v === 0) return ZERO_SPEED_COLOR;
    const t = vMax > 0 ? Math.max(0, Math.min(1, v / vMax)) : 1;
    const lum = 0.35 + 0.65 * t;
    const r = parseInt(base.slice(1, 3), 16);
    const g = parseInt(base.slice(3, 5), 16);
    const b = parseInt(base.slice(5, 7), 16);
    const hex = (c: number) => Math.round(c * lum).toString(16).padStart(2, "0");
    return `#${hex(r)}${hex(g)}${hex(b)}`;
  });
}

function polyline(
  id: "initial" | "adapted",
  rows: number[][],
  color: string,
  vMax: number,
  overlays: OverlayToggles,
): Polyline {
  const speeds = speedsOf(rows);
  return {
    id,
    color,
    points: positionsOf(rows),
    speeds,
    vertexColors: overlays.speedColoring ? speedRamp(speeds, vMax, color) : null,
  };
}

function boxOf(obj: SceneObjectDoc): BoxItem {
  return { label: obj.label, center: obj.center, dimensions: obj.dimensions };
}

export function buildSceneGraph(
  bundle: TurnView,
  overlays: OverlayToggles = DEFAULT_OVERLAYS,
): SceneGraph {
  const allSpeeds = [
    ...speedsOf(bundle.initial.waypoints),
    ...speedsOf(bundle.adapted.waypoints),
  ];
  const vMax = allSpeeds.length ? Math.max(...allSpeeds) : 0;

  const boxes = overlays.objects ? bundle.scene.objects.map(boxOf) : [];
  const labels: TextMarker[] = boxes.map((b) => ({
    text: b.label,
    position: b.center,
  }));
  const indexMarkers: TextMarker[] = overlays.waypointIndices
    ? positionsOf(bundle.adapted.waypoints).map((p, i) => ({
        text: String(i),
        position: p,
      }))
    : [];

  return {
    polylines: [
      polyline("initial", bundle.initial.waypoints, INITIAL_COLOR, vMax, overlays),
      polyline("adapted", bundle.adapted.waypoints, ADAPTED_COLOR, vMax, overlays),
    ],
    boxes,
    labels,
    indexMarkers,
  };
}
