/** Occupancy-grid run-length decoding.
 *
 * The stream is a sequence of LEB128 varint run lengths of alternating
 * cell values starting with 0 (empty), covering exactly G^3 cells in
 * x-fastest order.
 */

export class RleError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "RleError";
  }
}

/** Decode to one byte per cell (0/1), x-fastest, z slowest. */
export function rleDecode(stream: Uint8Array, resolution: number): Uint8Array {
  const total = resolution ** 3;
  const cells = new Uint8Array(total);
  let off = 0;
  let fill = 0;
  let value = 0;
  while (off < stream.length) {
    let run = 0;
    let shift = 0;
    for (;;) {
      if (off >= stream.length) {
        throw new RleError("truncated varint in occupancy stream");
      }
      const b = stream[off++];
      run += (b & 0x7f) * 2 ** shift;
      shift += 7;
      if ((b & 0x80) === 0) break;
    }
    if (fill + run > total) {
      throw new RleError(`occupancy runs cover ${fill + run} cells, grid has ${total}`);
    }
    cells.fill(value, fill, fill + run);
    fill += run;
    value ^= 1;
  }
  if (fill !== total) {
    throw new RleError(`occupancy runs cover ${fill} cells, grid has ${total}`);
  }
  return cells;
}
