/** binary32 -> binary16 conversion with round-to-nearest-even, matching
 * numpy's astype(float16) used when dense files are written. */

const buf = new ArrayBuffer(4);
const f32 = new Float32Array(buf);
const u32 = new Uint32Array(buf);

export function f32ToF16(value: number): number {
  f32[0] = value;
  const x = u32[0];
  const sign = (x >>> 16) & 0x8000;
  const exp = (x >>> 23) & 0xff;
  const frac = x & 0x7fffff;

  if (exp === 0xff) {
    // infinity or NaN
    return sign | 0x7c00 | (frac ? 0x200 : 0);
  }
  // re-bias from 127 to 15
  let e = exp - 127 + 15;
  if (e >= 0x1f) {
    return sign | 0x7c00; // overflow -> infinity
  }
  if (e <= 0) {
    if (e < -10) return sign; // underflow -> signed zero
    // subnormal half: shift in the implicit bit
    const m = (frac | 0x800000) >>> (1 - e);
    // round to nearest even on the 13 dropped bits
    const rounded = (m >>> 13) + roundBit(m, 13);
    return sign | rounded;
  }
  const rounded = (frac >>> 13) + roundBit(frac, 13);
  // carry out of the mantissa bumps the exponent correctly by construction
  return sign | ((e << 10) + rounded);
}

function roundBit(mantissa: number, shift: number): number {
  const half = 1 << (shift - 1);
  const rest = mantissa & ((1 << shift) - 1);
  if (rest > half) return 1;
  if (rest < half) return 0;
  return (mantissa >>> shift) & 1; // tie -> even
}
