import { describe, expect, it } from "vitest";
import {
  createOverlay,
  imageToScreen,
  MAX_SCALE,
  MIN_SCALE,
  panBy,
  resetView,
  screenToImage,
  setMask,
  toggleLayer,
  zoomAt,
} from "../src/overlay.js";
import type { LabelMap } from "../src/labelmap.js";

function mask(): LabelMap {
  return { width: 2, height: 2, data: Uint16Array.from([1, 0, 0, 1]) };
}

describe("overlay layers", () => {
  it("toggles visibility without touching the underlying data", () => {
    const view = createOverlay();
    setMask(view, mask());
    const mapRef = view.labelMap;
    const contourRef = view.contourSet;
    const pixels = [...view.labelMap!.data];

    expect(toggleLayer(view, "contours")).toBe(false);
    expect(toggleLayer(view, "contours")).toBe(true);
    toggleLayer(view, "image");

    expect(view.labelMap).toBe(mapRef); // same objects, not copies
    expect(view.contourSet).toBe(contourRef);
    expect([...view.labelMap!.data]).toEqual(pixels);
  });

  it("derives contours once per mask install", () => {
    const view = createOverlay();
    setMask(view, mask());
    expect(view.contourSet!.get(1)).toHaveLength(2); // two diagonal fragments
  });
});

describe("overlay transform", () => {
  it("zoom keeps the anchor point fixed and respects the scale limits", () => {
    const view = createOverlay();
    zoomAt(view, 2, 100, 50);
    expect(view.scale).toBe(2);
    // The image point that was at (100,50) must still project there.
    const anchor = screenToImage(view, 100, 50);
    const back = imageToScreen(view, anchor.x, anchor.y);
    expect(back.x).toBeCloseTo(100);
    expect(back.y).toBeCloseTo(50);

    for (let i = 0; i < 40; i++) zoomAt(view, 2, 0, 0);
    expect(view.scale).toBe(MAX_SCALE);
    for (let i = 0; i < 80; i++) zoomAt(view, 0.5, 0, 0);
    expect(view.scale).toBe(MIN_SCALE);
  });

  it("pan shifts offsets and reset restores identity", () => {
    const view = createOverlay();
    panBy(view, 10, -4);
    panBy(view, 5, 5);
    expect(view.offsetX).toBe(15);
    expect(view.offsetY).toBe(1);
    resetView(view);
    expect([view.scale, view.offsetX, view.offsetY]).toEqual([1, 0, 0]);
    const p = screenToImage(view, 33, 44);
    expect(p).toEqual({ x: 33, y: 44 });
  });

  it("view changes leave mask and contours untouched", () => {
    const view = createOverlay();
    setMask(view, mask());
    const mapRef = view.labelMap;
    const contourRef = view.contourSet;
    zoomAt(view, 4, 10, 10);
    panBy(view, -3, 9);
    resetView(view);
    expect(view.labelMap).toBe(mapRef);
    expect(view.contourSet).toBe(contourRef);
  });
});
