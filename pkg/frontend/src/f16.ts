/** IEEE 754 binary16 -> binary32 conversion. */

/** Convert one half-precision bit pattern to a number. */
export function f16ToF32(bits: number): number {
  const sign = (bits & 0x8000) ? -1 : 1;
  const exp = (bits >> 10) & 0x1f;
  const frac = bits & 0x3ff;
  if (exp === 0) {
    return sign * frac * 2 ** -24; // subnormal (or signed zero)
  }
  if (exp === 0x1f) {
    return frac ? NaN : sign * Infinity;
  }
  return sign * (1 + frac / 1024) * 2 ** (exp - 15);
}

/** Decode a little-endian binary16 buffer into a Float32Array. */
export function decodeF16(bytes: Uint8Array): Float32Array {
  if (bytes.length % 2 !== 0) {
    throw new Error(`binary16 blob has odd length ${bytes.length}`);
  }
  const n = bytes.length / 2;
  const out = new Float32Array(n);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  for (let i = 0; i < n; i++) {
    out[i] = f16ToF32(view.getUint16(2 * i, true));
  }
  return out;
}

/** Raw binary16 bit patterns (for lossless byte-parity checks and texture upload). */
export function f16Bits(bytes: Uint8Array): Uint16Array {
  if (bytes.length % 2 !== 0) {
    throw new Error(`binary16 blob has odd length ${bytes.length}`);
  }
  const n = bytes.length / 2;
  const out = new Uint16Array(n);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  for (let i = 0; i < n; i++) {
    out[i] = view.getUint16(2 * i, true);
  }
  return out;
}
