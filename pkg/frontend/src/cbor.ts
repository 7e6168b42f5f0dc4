/** Strict decoder for the canonical CBOR subset used by .ppng files.
 *
 * Accepts definite-length unsigned/negative integers, byte strings, text
 * strings, arrays, integer-keyed maps, and 64-bit floats. Everything else
 * (indefinite lengths, tags, simple values) is rejected, as are trailing
 * bytes and truncated input.
 */

export class CborError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CborError";
  }
}

export type CborValue =
  | number
  | Uint8Array
  | string
  | CborValue[]
  | Map<number, CborValue>;

class Reader {
  private off = 0;
  constructor(private data: Uint8Array) {}

  private need(n: number): void {
    if (this.off + n > this.data.length) {
      throw new CborError(`truncated CBOR: need ${n} bytes at offset ${this.off}`);
    }
  }

  byte(): number {
    this.need(1);
    return this.data[this.off++];
  }

  bytes(n: number): Uint8Array {
    this.need(n);
    const out = this.data.subarray(this.off, this.off + n);
    this.off += n;
    return out;
  }

  /** Read the length/value field following a head byte. */
  arg(info: number): number {
    if (info < 24) return info;
    if (info === 24) return this.byte();
    if (info === 25) {
      this.need(2);
      const v = (this.data[this.off] << 8) | this.data[this.off + 1];
      this.off += 2;
      return v;
    }
    if (info === 26) {
      this.need(4);
      let v = 0;
      for (let i = 0; i < 4; i++) v = v * 256 + this.data[this.off + i];
      this.off += 4;
      return v;
    }
    if (info === 27) {
      this.need(8);
      let v = 0;
      for (let i = 0; i < 8; i++) v = v * 256 + this.data[this.off + i];
      this.off += 8;
      if (!Number.isSafeInteger(v)) {
        throw new CborError("64-bit integer exceeds the safe JS range");
      }
      return v;
    }
    throw new CborError(`unsupported additional info ${info} (indefinite length?)`);
  }

  item(): CborValue {
    const head = this.byte();
    const major = head >> 5;
    const info = head & 0x1f;
    switch (major) {
      case 0:
        return this.arg(info);
      case 1:
        return -1 - this.arg(info);
      case 2:
        return this.bytes(this.arg(info));
      case 3:
        return new TextDecoder("utf-8", { fatal: true }).decode(this.bytes(this.arg(info)));
      case 4: {
        const n = this.arg(info);
        const out: CborValue[] = [];
        for (let i = 0; i < n; i++) out.push(this.item());
        return out;
      }
      case 5: {
        const n = this.arg(info);
        const out = new Map<number, CborValue>();
        for (let i = 0; i < n; i++) {
          const key = this.item();
          if (typeof key !== "number" || !Number.isInteger(key)) {
            throw new CborError("map keys must be integers");
          }
          if (out.has(key)) throw new CborError(`duplicate map key ${key}`);
          out.set(key, this.item());
        }
        return out;
      }
      case 7: {
        if (info === 27) {
          this.need(8);
          const v = new DataView(
            this.data.buffer, this.data.byteOffset + this.off, 8
          ).getFloat64(0, false);
          this.off += 8;
          return v;
        }
        throw new CborError(`unsupported simple/float encoding ${info}`);
      }
      default:
        throw new CborError(`unsupported major type ${major}`);
    }
  }

  done(): boolean {
    return this.off === this.data.length;
  }
}

export function cborDecode(data: Uint8Array): CborValue {
  const reader = new Reader(data);
  const value = reader.item();
  if (!reader.done()) {
    throw new CborError("trailing bytes after the top-level CBOR item");
  }
  return value;
}
