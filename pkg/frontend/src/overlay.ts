/**
 * Overlay view state: the patch photo underneath, instance contours on top,
 * plus the zoom/pan transform.  Layer toggles and view changes touch only
 * the flags and the transform — the label map and the contours derived from
 * it are set once per mask and never mutated afterwards.
 */

import { traceContours, type ContourSet } from "./contours.js";
import type { LabelMap } from "./labelmap.js";

export type LayerName = "image" | "contours";

export interface OverlayView {
  layers: Record<LayerName, { visible: boolean }>;
  labelMap: LabelMap | null;
  contourSet: ContourSet | null; // derived from labelMap, cached
  scale: number;
  offsetX: number;
  offsetY: number;
}

export const MIN_SCALE = 0.25;
export const MAX_SCALE = 32;

export function createOverlay(): OverlayView {
  return {
    layers: { image: { visible: true }, contours: { visible: true } },
    labelMap: null,
    contourSet: null,
    scale: 1,
    offsetX: 0,
    offsetY: 0,
  };
}

/** Install a mask; contours are traced once here, not on every frame. */
export function setMask(view: OverlayView, map: LabelMap): void {
  view.labelMap = map;
  view.contourSet = traceContours(map);
}

export function toggleLayer(view: OverlayView, layer: LayerName): boolean {
  const entry = view.layers[layer];
  entry.visible = !entry.visible;
  return entry.visible;
}

/** Zoom around a fixed screen point so the pixel under the cursor stays put. */
export function zoomAt(view: OverlayView, factor: number, sx: number, sy: number): void {
  const next = Math.min(MAX_SCALE, Math.max(MIN_SCALE, view.scale * factor));
  const applied = next / view.scale;
  view.offsetX = sx - (sx - view.offsetX) * applied;
  view.offsetY = sy - (sy - view.offsetY) * applied;
  view.scale = next;
}

export function panBy(view: OverlayView, dx: number, dy: number): void {
  view.offsetX += dx;
  view.offsetY += dy;
}

export function resetView(view: OverlayView): void {
  view.scale = 1;
  view.offsetX = 0;
  view.offsetY = 0;
}

export function screenToImage(view: OverlayView, sx: number, sy: number): { x: number; y: number } {
  return { x: (sx - view.offsetX) / view.scale, y: (sy - view.offsetY) / view.scale };
}

export function imageToScreen(view: OverlayView, x: number, y: number): { x: number; y: number } {
  return { x: x * view.scale + view.offsetX, y: y * view.scale + view.offsetY };
}
