/**
 * Instance contours from a label map.
 *
 * For every instance id we collect the directed pixel-edge segments where the
 * instance meets anything else (background, another id, or the raster edge),
 * oriented so the walk runs clockwise on screen (x right, y down) around the
 * instance.  Stitching those segments start-to-end yields closed loops with
 * vertices on the pixel-corner lattice: exterior boundaries come out
 * clockwise, holes counter-clockwise.  Everything is derived — tracing never
 * touches the label data.
 */

import type { LabelMap } from "./labelmap.js";

/** Closed loop of [x, y] pixel-corner vertices; the last edge wraps to the first. */
export type ContourLoop = Array<[number, number]>;

/** All loops per instance id (an id can produce several: fragments and holes). */
export type ContourSet = Map<number, ContourLoop[]>;

// Directions are indices into DX/DY: 0=right, 1=down, 2=left, 3=up.
// Clockwise on screen is +1 mod 4.
const DX = [1, 0, -1, 0] as const;
const DY = [0, 1, 0, -1] as const;

interface Edge {
  x: number; // start vertex
  y: number;
  dir: number; // 0..3
  used: boolean;
}

function vertexKey(x: number, y: number): number {
  // Vertices live on a (width+1) x (height+1) lattice; pack into one int.
  // The lattice spans 0..65536 per axis, hence the 0x10001 stride.
  return y * 0x10001 + x;
}

/**
 * Trace every instance's boundary loops.
 *
 * At a pinch corner (two parts of the same instance touching only
 * diagonally) four edges meet at one vertex; the walk always takes the
 * sharpest clockwise turn, which keeps each square on its own loop and makes
 * the output deterministic.
 */
export function traceContours(map: LabelMap): ContourSet {
  const { width, height, data } = map;
  const at = (px: number, py: number): number => {
    if (px < 0 || py < 0 || px >= width || py >= height) return 0;
    return data[py * width + px]!;
  };

  // Gather directed boundary edges per instance id.
  const edgesById = new Map<number, Map<number, Edge[]>>(); // id -> startVertex -> edges
  const push = (id: number, x: number, y: number, dir: number) => {
    let byVertex = edgesById.get(id);
    if (byVertex === undefined) {
      byVertex = new Map();
      edgesById.set(id, byVertex);
    }
    const key = vertexKey(x, y);
    let list = byVertex.get(key);
    if (list === undefined) {
      list = [];
      byVertex.set(key, list);
    }
    list.push({ x, y, dir, used: false });
  };

  for (let py = 0; py < height; py++) {
    for (let px = 0; px < width; px++) {
      const id = data[py * width + px]!;
      if (id === 0) continue;
      // Pixel (px,py) spans corners (px,py)..(px+1,py+1).  Clockwise sides:
      if (at(px, py - 1) !== id) push(id, px, py, 0); // top, heading right
      if (at(px + 1, py) !== id) push(id, px + 1, py, 1); // right, heading down
      if (at(px, py + 1) !== id) push(id, px + 1, py + 1, 2); // bottom, heading left
      if (at(px - 1, py) !== id) push(id, px, py + 1, 3); // left, heading up
    }
  }

  const result: ContourSet = new Map();
  for (const id of [...edgesById.keys()].sort((a, b) => a - b)) {
    const byVertex = edgesById.get(id)!;
    const all: Edge[] = [];
    for (const list of byVertex.values()) all.push(...list);
    // Deterministic loop seeds: scan edges by start vertex, then direction.
    all.sort((a, b) => a.y - b.y || a.x - b.x || a.dir - b.dir);

    const loops: ContourLoop[] = [];
    for (const seed of all) {
      if (seed.used) continue;
      const loop: ContourLoop = [];
      let edge = seed;
      let prevDir = -1;
      for (;;) {
        edge.used = true;
        // Emit a vertex only where the walk turns; straight runs collapse.
        if (edge.dir !== prevDir) loop.push([edge.x, edge.y]);
        prevDir = edge.dir;
        const nx = edge.x + DX[edge.dir]!;
        const ny = edge.y + DY[edge.dir]!;
        const candidates = byVertex.get(vertexKey(nx, ny)) ?? [];
        // Sharpest clockwise turn first: +1, straight 0, then -1 (mod 4).
        // Per (vertex, direction) there is at most one edge per instance, so
        // this pairing is deterministic and always closes the loop it opened.
        let next: Edge | null = null;
        for (const turn of [1, 0, 3]) {
          const want = (edge.dir + turn) % 4;
          const found = candidates.find((c) => c.dir === want && (!c.used || c === seed));
          if (found !== undefined) {
            next = found;
            break;
          }
        }
        if (next === null) {
          throw new Error(`contour walk broke at vertex (${nx},${ny}) for id ${id}`);
        }
        if (next === seed) break;
        edge = next;
      }
      // If the closing edge runs straight into the seed edge, the seed's
      // start vertex is collinear and does not belong in the loop.
      if (prevDir === seed.dir && loop.length > 1) loop.shift();
      loops.push(loop);
    }
    result.set(id, loops);
  }
  return result;
}

/** Rotate each loop to start at its smallest (y, x) vertex and order loops. */
export function canonicalContours(set: ContourSet): ContourSet {
  const out: ContourSet = new Map();
  for (const id of [...set.keys()].sort((a, b) => a - b)) {
    const loops = set.get(id)!.map((loop) => {
      let best = 0;
      for (let i = 1; i < loop.length; i++) {
        const [x, y] = loop[i]!;
        const [bx, by] = loop[best]!;
        if (y < by || (y === by && x < bx)) best = i;
      }
      return [...loop.slice(best), ...loop.slice(0, best)] as ContourLoop;
    });
    loops.sort((a, b) => a[0]![1] - b[0]![1] || a[0]![0] - b[0]![0] || a.length - b.length);
    out.set(id, loops);
  }
  return out;
}

/** Structural equality of two contour sets in canonical form. */
export function contoursEqual(a: ContourSet, b: ContourSet): boolean {
  const ca = canonicalContours(a);
  const cb = canonicalContours(b);
  if (ca.size !== cb.size) return false;
  for (const [id, loopsA] of ca) {
    const loopsB = cb.get(id);
    if (loopsB === undefined || loopsA.length !== loopsB.length) return false;
    for (let i = 0; i < loopsA.length; i++) {
      const la = loopsA[i]!;
      const lb = loopsB[i]!;
      if (la.length !== lb.length) return false;
      for (let j = 0; j < la.length; j++) {
        if (la[j]![0] !== lb[j]![0] || la[j]![1] !== lb[j]![1]) return false;
      }
    }
  }
  return true;
}
