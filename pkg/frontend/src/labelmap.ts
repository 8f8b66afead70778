/**
 * Label maps and their run-length wire format.
 *
 * A label map is a dense row-major uint16 raster: 0 = background, 1..65535 =
 * instance ids.  On the wire the service uses a sparse per-instance RLE JSON
 * document; runs index into the flattened raster and may cross row
 * boundaries.  Encoding always emits maximal runs, so encode(decode(doc))
 * reproduces a canonical document byte-for-byte.
 */

export const MAX_INSTANCE_ID = 65535;

export interface RleInstance {
  id: number;
  runs: Array<[number, number]>; // [start, length] over flattened pixels
}

export interface RleDocument {
  width: number;
  height: number;
  instances: RleInstance[];
}

export interface LabelMap {
  width: number;
  height: number;
  data: Uint16Array; // row-major, length = width * height
}

export class MaskFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MaskFormatError";
  }
}

function isCount(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v) && v >= 1;
}

export function emptyLabelMap(width: number, height: number): LabelMap {
  if (!isCount(width) || !isCount(height)) {
    throw new MaskFormatError(`dimensions must be >= 1, got ${width}x${height}`);
  }
  return { width, height, data: new Uint16Array(width * height) };
}

/** Parse an already-JSON.parsed payload into a validated RleDocument. */
export function rleFromPayload(payload: unknown): RleDocument {
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new MaskFormatError("RLE document must be a JSON object");
  }
  const doc = payload as Record<string, unknown>;
  if (!isCount(doc.width) || !isCount(doc.height)) {
    throw new MaskFormatError(
      `document dimensions must be >= 1, got ${doc.width}x${doc.height}`,
    );
  }
  if (!Array.isArray(doc.instances)) {
    throw new MaskFormatError("RLE document is missing an instances array");
  }
  const instances: RleInstance[] = doc.instances.map((entry: unknown) => {
    if (typeof entry !== "object" || entry === null) {
      throw new MaskFormatError("each instance must be an object");
    }
    const inst = entry as Record<string, unknown>;
    const id = inst.id;
    if (typeof id !== "number" || !Number.isInteger(id)) {
      throw new MaskFormatError(`instance id must be an integer, got ${id}`);
    }
    if (!Array.isArray(inst.runs)) {
      throw new MaskFormatError(`instance ${id}: runs must be an array`);
    }
    const runs = inst.runs.map((run: unknown): [number, number] => {
      if (!Array.isArray(run) || run.length !== 2) {
        throw new MaskFormatError(`instance ${id}: each run must be [start, length]`);
      }
      const [start, length] = run;
      if (!Number.isInteger(start) || !Number.isInteger(length)) {
        throw new MaskFormatError(`instance ${id}: runs must hold integers`);
      }
      return [start, length];
    });
    return { id, runs };
  });
  return { width: doc.width, height: doc.height, instances };
}

/**
 * Decode an RLE document to a dense label map.
 *
 * Rejects out-of-bounds runs, unsorted or overlapping runs within an
 * instance, pixels claimed by two instances, and ids outside 1..65535 —
 * mirroring what the service itself enforces, so a client-side failure
 * means the payload would have been rejected anyway.
 */
export function decodeRle(doc: RleDocument): LabelMap {
  const map = emptyLabelMap(doc.width, doc.height);
  const total = doc.width * doc.height;
  const seen = new Set<number>();
  for (const inst of doc.instances) {
    if (inst.id < 1 || inst.id > MAX_INSTANCE_ID) {
      throw new MaskFormatError(`instance id ${inst.id} outside [1, ${MAX_INSTANCE_ID}]`);
    }
    if (seen.has(inst.id)) {
      throw new MaskFormatError(`instance id ${inst.id} listed twice`);
    }
    seen.add(inst.id);
    let prevEnd = 0;
    for (const [start, length] of inst.runs) {
      if (length < 1) {
        throw new MaskFormatError(`instance ${inst.id}: run length ${length} < 1`);
      }
      if (start < prevEnd) {
        throw new MaskFormatError(`instance ${inst.id}: runs unsorted or overlapping`);
      }
      if (start < 0 || start + length > total) {
        throw new MaskFormatError(
          `instance ${inst.id}: run (${start},${length}) exceeds ${total} pixels`,
        );
      }
      for (let i = start; i < start + length; i++) {
        if (map.data[i] !== 0) {
          throw new MaskFormatError(
            `instance ${inst.id}: run (${start},${length}) overlaps another instance`,
          );
        }
        map.data[i] = inst.id;
      }
      prevEnd = start + length;
    }
  }
  return map;
}

/** Encode a label map as maximal runs, instances ordered by id. */
export function encodeRle(map: LabelMap): RleDocument {
  const { width, height, data } = map;
  if (!isCount(width) || !isCount(height) || data.length !== width * height) {
    throw new MaskFormatError(
      `label map shape mismatch: ${data.length} pixels for ${width}x${height}`,
    );
  }
  const perId = new Map<number, Array<[number, number]>>();
  let i = 0;
  while (i < data.length) {
    const value = data[i]!;
    let j = i + 1;
    while (j < data.length && data[j] === value) j++;
    if (value !== 0) {
      let runs = perId.get(value);
      if (runs === undefined) {
        runs = [];
        perId.set(value, runs);
      }
      runs.push([i, j - i]);
    }
    i = j;
  }
  const ids = [...perId.keys()].sort((a, b) => a - b);
  return {
    width,
    height,
    instances: ids.map((id) => ({ id, runs: perId.get(id)! })),
  };
}

/**
 * Canonical JSON text for a document: key order width,height,instances and
 * id,runs with no whitespace — byte-identical to what the service emits.
 */
export function rleToJson(doc: RleDocument): string {
  return JSON.stringify({
    width: doc.width,
    height: doc.height,
    instances: doc.instances.map((inst) => ({ id: inst.id, runs: inst.runs })),
  });
}

export function rleFromJson(text: string): RleDocument {
  let payload: unknown;
  try {
    payload = JSON.parse(text);
  } catch (err) {
    throw new MaskFormatError(`invalid RLE JSON: ${(err as Error).message}`);
  }
  return rleFromPayload(payload);
}

/** Distinct nonzero ids present, ascending. */
export function instanceIds(map: LabelMap): number[] {
  const seen = new Set<number>();
  for (const v of map.data) {
    if (v !== 0) seen.add(v);
  }
  return [...seen].sort((a, b) => a - b);
}

export function labelMapsEqual(a: LabelMap, b: LabelMap): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}
