/** .ppng file decoding: CBOR schema, binary16 payload, occupancy, and
 * CPU composition of factorized models into dense cubes for texture upload.
 *
 * Schema (canonical CBOR map, integer keys):
 *   0 magic "PPNG"   1 version(=1)   2 type(1|2|3)   3 Q   4 L   5 D   6 R
 *   7 frequency list   8 aabb (6 floats, min then max)
 *   9 payload blobs: field blobs then MLP weights w1[, w1b], w2, w3
 *   10 occupancy {0: resolution, 1: RLE stream}
 *
 * Dense cube blobs are stored channel-fastest then x, y, z — the exact
 * memory order WebGL2 expects for a 3D texture upload.
 */

import { cborDecode, CborValue } from "./cbor.js";
import { decodeF16, f16Bits } from "./f16.js";
import { rleDecode } from "./rle.js";

export class DecodeError extends Error {
  constructor(message: string, name = "DecodeError") {
    super(message);
    this.name = name;
  }
}

export class MagicError extends DecodeError {
  constructor(msg: string) { super(msg, "MagicError"); }
}

export class VersionError extends DecodeError {
  constructor(msg: string) { super(msg, "VersionError"); }
}

export class BlobLengthError extends DecodeError {
  constructor(msg: string) { super(msg, "BlobLengthError"); }
}

export interface PpngModel {
  type: 1 | 2 | 3;
  q: number;
  levels: number;
  channels: number;
  rank: number;
  freqs: number[];
  aabbMin: [number, number, number];
  aabbMax: [number, number, number];
  /** Raw binary16 payload blobs in file order (field blobs then MLP). */
  payloadBits: Uint16Array[];
  /** One dense cube per frequency component, channel-fastest then x, y, z. */
  cubes: Float32Array[];
  mlp: { w1: Float32Array; w1b: Float32Array | null; w2: Float32Array; w3: Float32Array };
  occupancy: { resolution: number; cells: Uint8Array };
}

function asNumber(v: CborValue | undefined, what: string): number {
  if (typeof v !== "number") throw new DecodeError(`${what} is not a number`);
  return v;
}

function asBytes(v: CborValue | undefined, what: string): Uint8Array {
  if (!(v instanceof Uint8Array)) throw new DecodeError(`${what} is not a byte string`);
  return v;
}

function blobFloats(blob: Uint8Array, count: number, what: string): Float32Array {
  if (blob.length !== 2 * count) {
    throw new BlobLengthError(`${what}: expected ${2 * count} bytes, got ${blob.length}`);
  }
  return decodeF16(blob);
}

/** cube[((z*Q + y)*Q + x)*D + d] = sum_r vx[x]*vy[y]*vz[z], per component. */
function composeCp(
  vx: Float32Array, vy: Float32Array, vz: Float32Array,
  c: number, q: number, rank: number, d: number
): Float32Array {
  const cube = new Float32Array(q * q * q * d);
  const bank = q * d;
  for (let r = 0; r < rank; r++) {
    const base = (c * rank + r) * bank;
    for (let z = 0; z < q; z++) {
      for (let y = 0; y < q; y++) {
        for (let x = 0; x < q; x++) {
          const out = ((z * q + y) * q + x) * d;
          for (let ch = 0; ch < d; ch++) {
            cube[out + ch] +=
              vx[base + x * d + ch] * vy[base + y * d + ch] * vz[base + z * d + ch];
          }
        }
      }
    }
  }
  return cube;
}

/** cube[...] = sum_r pxy[x,y]*pyz[y,z]*pxz[x,z], per component. */
function composeTriplane(
  pxy: Float32Array, pxz: Float32Array, pyz: Float32Array,
  c: number, q: number, rank: number, d: number
): Float32Array {
  const cube = new Float32Array(q * q * q * d);
  const plane = q * q * d;
  for (let r = 0; r < rank; r++) {
    const base = (c * rank + r) * plane;
    for (let z = 0; z < q; z++) {
      for (let y = 0; y < q; y++) {
        for (let x = 0; x < q; x++) {
          const out = ((z * q + y) * q + x) * d;
          const ixy = base + (x * q + y) * d;
          const iyz = base + (y * q + z) * d;
          const ixz = base + (x * q + z) * d;
          for (let ch = 0; ch < d; ch++) {
            cube[out + ch] += pxy[ixy + ch] * pyz[iyz + ch] * pxz[ixz + ch];
          }
        }
      }
    }
  }
  return cube;
}

export function decodePpng(data: ArrayBuffer | Uint8Array): PpngModel {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  const doc = cborDecode(bytes);
  if (!(doc instanceof Map)) throw new DecodeError("top-level CBOR item is not a map");

  if (doc.get(0) !== "PPNG") throw new MagicError(`bad magic ${String(doc.get(0))}`);
  if (doc.get(1) !== 1) throw new VersionError(`unsupported version ${String(doc.get(1))}`);
  const type = asNumber(doc.get(2), "type");
  if (type !== 1 && type !== 2 && type !== 3) {
    throw new DecodeError(`unknown ppng_type ${type}`);
  }
  const q = asNumber(doc.get(3), "resolution");
  const levels = asNumber(doc.get(4), "levels");
  const channels = asNumber(doc.get(5), "channels");
  const rank = asNumber(doc.get(6), "rank");
  const freqsRaw = doc.get(7);
  if (!Array.isArray(freqsRaw) || freqsRaw.length !== levels) {
    throw new DecodeError("frequency list length does not match declared L");
  }
  const freqs = freqsRaw.map((v) => asNumber(v, "frequency"));
  const aabbRaw = doc.get(8);
  if (!Array.isArray(aabbRaw) || aabbRaw.length !== 6) {
    throw new DecodeError("aabb must hold 6 numbers");
  }
  const aabb = aabbRaw.map((v) => asNumber(v, "aabb entry"));

  const payloadRaw = doc.get(9);
  if (!Array.isArray(payloadRaw)) throw new DecodeError("payload is not an array");
  const payload = payloadRaw.map((b, i) => asBytes(b, `payload blob ${i}`));
  const payloadBits = payload.map((b) => f16Bits(b));

  const nCubes = 2 * levels;
  const nField = type === 3 ? nCubes : 3;
  if (payload.length < nField + 3) {
    throw new BlobLengthError(
      `expected at least ${nField + 3} payload blobs, got ${payload.length}`
    );
  }

  let cubes: Float32Array[];
  if (type === 3) {
    cubes = payload
      .slice(0, nCubes)
      .map((b, i) => blobFloats(b, q * q * q * channels, `cube ${i}`));
  } else if (type === 1) {
    const size = nCubes * rank * q * channels;
    const [vx, vy, vz] = ["vx", "vy", "vz"].map((n, i) =>
      blobFloats(payload[i], size, n)
    );
    cubes = [];
    for (let c = 0; c < nCubes; c++) {
      cubes.push(composeCp(vx, vy, vz, c, q, rank, channels));
    }
  } else {
    const size = nCubes * rank * q * q * channels;
    const [pxy, pxz, pyz] = ["pxy", "pxz", "pyz"].map((n, i) =>
      blobFloats(payload[i], size, n)
    );
    cubes = [];
    for (let c = 0; c < nCubes; c++) {
      cubes.push(composeTriplane(pxy, pxz, pyz, c, q, rank, channels));
    }
  }

  const mlpBlobs = payload.slice(nField);
  const featureDim = nCubes * channels;
  let w1: Float32Array, w1b: Float32Array | null, w2: Float32Array, w3: Float32Array;
  if (mlpBlobs.length === 3) {
    w1 = blobFloats(mlpBlobs[0], 16 * featureDim, "w1");
    w1b = null;
    w2 = blobFloats(mlpBlobs[1], 16 * 32, "w2");
    w3 = blobFloats(mlpBlobs[2], 3 * 16, "w3");
  } else if (mlpBlobs.length === 4) {
    w1 = blobFloats(mlpBlobs[0], 16 * featureDim, "w1");
    w1b = blobFloats(mlpBlobs[1], 16 * 16, "w1b");
    w2 = blobFloats(mlpBlobs[2], 16 * 32, "w2");
    w3 = blobFloats(mlpBlobs[3], 3 * 16, "w3");
  } else {
    throw new BlobLengthError(`expected 3 or 4 MLP blobs, got ${mlpBlobs.length}`);
  }

  const occDoc = doc.get(10);
  if (!(occDoc instanceof Map)) throw new DecodeError("occupancy entry is not a map");
  const occRes = asNumber(occDoc.get(0), "occupancy resolution");
  const cells = rleDecode(asBytes(occDoc.get(1), "occupancy stream"), occRes);

  return {
    type, q, levels, channels, rank, freqs,
    aabbMin: [aabb[0], aabb[1], aabb[2]],
    aabbMax: [aabb[3], aabb[4], aabb[5]],
    payloadBits, cubes,
    mlp: { w1, w1b, w2, w3 },
    occupancy: { resolution: occRes, cells },
  };
}
