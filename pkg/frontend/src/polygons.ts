/**
 * Correction drafts: closed polygons drawn over a patch, rasterized into a
 * fresh label map on submit.
 *
 * One polygon = one instance.  Polygon N is painted with id N+1 in drawing
 * order, so where polygons overlap the later one wins.  Polygons must be
 * simple (non-self-intersecting) and must cover at least one pixel centre,
 * both checked client-side before anything is sent.
 */

import { emptyLabelMap, type LabelMap } from "./labelmap.js";

export interface Point {
  x: number;
  y: number;
}

export interface DraftProblem {
  polygon: number; // index into the draft's polygon list
  message: string;
}

export class DraftValidationError extends Error {
  problems: DraftProblem[];
  constructor(problems: DraftProblem[]) {
    super(problems.map((p) => `polygon ${p.polygon}: ${p.message}`).join("; "));
    this.name = "DraftValidationError";
    this.problems = problems;
  }
}

/** An editable correction for one patch; operations form the undo stack. */
export class CorrectionDraft {
  readonly patchId: string;
  readonly width: number;
  readonly height: number;
  private stack: Point[][] = [];

  constructor(patchId: string, width: number, height: number) {
    this.patchId = patchId;
    this.width = width;
    this.height = height;
  }

  get polygons(): ReadonlyArray<ReadonlyArray<Point>> {
    return this.stack;
  }

  addPolygon(points: Point[]): void {
    this.stack.push(points.map((p) => ({ x: p.x, y: p.y })));
  }

  /** Remove the most recent polygon; false when there is nothing to undo. */
  undo(): boolean {
    return this.stack.pop() !== undefined;
  }

  /** Submit stays disabled until the draft holds at least one polygon. */
  get canSubmit(): boolean {
    return this.stack.length > 0;
  }
}

// --- geometry ---------------------------------------------------------------

function cross(o: Point, a: Point, b: Point): number {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

function onSegment(p: Point, q: Point, r: Point): boolean {
  // r collinear with p–q: does it lie between them?
  return (
    Math.min(p.x, q.x) <= r.x &&
    r.x <= Math.max(p.x, q.x) &&
    Math.min(p.y, q.y) <= r.y &&
    r.y <= Math.max(p.y, q.y)
  );
}

/** True when segments a1–a2 and b1–b2 share any point. */
export function segmentsIntersect(a1: Point, a2: Point, b1: Point, b2: Point): boolean {
  const d1 = cross(b1, b2, a1);
  const d2 = cross(b1, b2, a2);
  const d3 = cross(a1, a2, b1);
  const d4 = cross(a1, a2, b2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 === 0 && onSegment(b1, b2, a1)) return true;
  if (d2 === 0 && onSegment(b1, b2, a2)) return true;
  if (d3 === 0 && onSegment(a1, a2, b1)) return true;
  if (d4 === 0 && onSegment(a1, a2, b2)) return true;
  return false;
}

function polygonArea(points: ReadonlyArray<Point>): number {
  let twice = 0;
  for (let i = 0; i < points.length; i++) {
    const a = points[i]!;
    const b = points[(i + 1) % points.length]!;
    twice += a.x * b.y - b.x * a.y;
  }
  return Math.abs(twice) / 2;
}

/**
 * Check one closed ring: at least 3 distinct vertices, finite in-bounds
 * coordinates, nonzero area, and no self-intersection.  Adjacent edges may
 * touch only at their shared vertex; everything else must stay apart.
 */
export function validatePolygon(
  points: ReadonlyArray<Point>,
  width: number,
  height: number,
): string | null {
  if (points.length < 3) return `needs at least 3 vertices, has ${points.length}`;
  for (const p of points) {
    if (!Number.isFinite(p.x) || !Number.isFinite(p.y)) return "has a non-finite vertex";
    if (p.x < 0 || p.x > width || p.y < 0 || p.y > height) {
      return `vertex (${p.x},${p.y}) is outside the ${width}x${height} patch`;
    }
  }
  const n = points.length;
  for (let i = 0; i < n; i++) {
    const a = points[i]!;
    const b = points[(i + 1) % n]!;
    if (a.x === b.x && a.y === b.y) return "has a zero-length edge";
  }
  for (let i = 0; i < n; i++) {
    const a1 = points[i]!;
    const a2 = points[(i + 1) % n]!;
    for (let j = i + 1; j < n; j++) {
      const b1 = points[j]!;
      const b2 = points[(j + 1) % n]!;
      const adjacent = j === i + 1 || (i === 0 && j === n - 1);
      if (adjacent) {
        // The shared endpoint is the ring itself; any other contact means
        // one edge doubles back along its neighbour.  The non-shared
        // endpoints are (b2, a1) for consecutive edges and (b1, a2) for the
        // closing pair.
        const farB = j === i + 1 ? b2 : b1;
        const farA = j === i + 1 ? a1 : a2;
        if (
          (cross(a1, a2, farB) === 0 && onSegment(a1, a2, farB)) ||
          (cross(b1, b2, farA) === 0 && onSegment(b1, b2, farA))
        ) {
          return "doubles back over itself";
        }
      } else if (segmentsIntersect(a1, a2, b1, b2)) {
        return "intersects itself";
      }
    }
  }
  if (polygonArea(points) === 0) return "encloses no area";
  return null;
}

export function validateDraft(draft: CorrectionDraft): DraftProblem[] {
  const problems: DraftProblem[] = [];
  draft.polygons.forEach((points, index) => {
    const message = validatePolygon(points, draft.width, draft.height);
    if (message !== null) problems.push({ polygon: index, message });
  });
  return problems;
}

/** Paint one ring into the map, even-odd rule over pixel centres. */
function paintPolygon(
  map: LabelMap,
  points: ReadonlyArray<Point>,
  id: number,
): number {
  let painted = 0;
  const n = points.length;
  for (let y = 0; y < map.height; y++) {
    const cy = y + 0.5;
    const xs: number[] = [];
    for (let i = 0; i < n; i++) {
      const a = points[i]!;
      const b = points[(i + 1) % n]!;
      // Half-open span so a vertex landing exactly on the scanline is
      // counted by exactly one of its two edges.
      if ((a.y <= cy && cy < b.y) || (b.y <= cy && cy < a.y)) {
        xs.push(a.x + ((cy - a.y) * (b.x - a.x)) / (b.y - a.y));
      }
    }
    xs.sort((p, q) => p - q);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const x0 = Math.max(0, Math.ceil(xs[k]! - 0.5));
      const x1 = Math.min(map.width - 1, Math.ceil(xs[k + 1]! - 0.5) - 1);
      for (let x = x0; x <= x1; x++) {
        map.data[y * map.width + x] = id;
        painted++;
      }
    }
  }
  return painted;
}

/**
 * Rasterize the whole draft: polygon i becomes instance i+1, painted in
 * drawing order so later polygons overwrite earlier ones where they overlap.
 *
 * Throws DraftValidationError when any polygon is malformed or covers no
 * pixel centre at all (a sliver that would silently vanish server-side).
 * A polygon fully painted over by a LATER one is fine — that is the
 * overwrite rule doing its job, not a lost stroke.
 */
export function rasterizeDraft(draft: CorrectionDraft): LabelMap {
  const problems = validateDraft(draft);
  if (problems.length > 0) throw new DraftValidationError(problems);
  const map = emptyLabelMap(draft.width, draft.height);
  const empty: DraftProblem[] = [];
  draft.polygons.forEach((points, index) => {
    const painted = paintPolygon(map, points, index + 1);
    if (painted === 0) {
      empty.push({ polygon: index, message: "covers no pixel centres" });
    }
  });
  if (empty.length > 0) throw new DraftValidationError(empty);
  return map;
}
