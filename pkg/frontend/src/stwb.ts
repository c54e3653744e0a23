/**
 * Reader and writer for the STWB weight container.
 *
 * Layout, all little-endian: magic "STWB", u32 version, u32 array count;
 * per array a u32 name length, the UTF-8 name, u8 rank, u64 dims, then the
 * raw f32 payload; finally a u32 length plus a UTF-8 JSON trailer holding
 * per-channel means and scales.
 */
import { Buffer } from "node:buffer";

export const STWB_MAGIC = "STWB";
export const STWB_VERSION = 1;

/** One named array: f32 payload plus dimensions; layout is the caller's contract. */
export interface Tensor {
  dims: readonly number[];
  data: Float32Array;
}

/** Channel statistics stored in the trailer. */
export interface Preprocessing {
  means: readonly number[];
  scales: readonly number[];
}

export interface WeightFile {
  version: number;
  entries: Map<string, Tensor>;
  preprocessing: Preprocessing;
}

/** A structurally invalid container. */
export class FormatError extends Error {}

const HOST_LE = new Uint8Array(new Uint32Array([1]).buffer)[0] === 1;

function swapWords(bytes: Uint8Array): void {
  for (let i = 0; i < bytes.length; i += 4) {
    let t = bytes[i];
    bytes[i] = bytes[i + 3];
    bytes[i + 3] = t;
    t = bytes[i + 1];
    bytes[i + 1] = bytes[i + 2];
    bytes[i + 2] = t;
  }
}

// Byte moves only: going through doubles would quietly canonicalize NaN
// payloads and break the bit-for-bit round-trip promise.
function f32ToLittleEndian(data: Float32Array): Buffer {
  const view = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  if (HOST_LE) {
    return view;
  }
  const out = Buffer.from(view);
  swapWords(out);
  return out;
}

function f32FromLittleEndian(raw: Buffer): Float32Array {
  const aligned = new ArrayBuffer(raw.byteLength);
  const bytes = new Uint8Array(aligned);
  bytes.set(raw);
  if (!HOST_LE) {
    swapWords(bytes);
  }
  return new Float32Array(aligned);
}

function elementCount(dims: readonly number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

export function packWeights(
  entries: ReadonlyMap<string, Tensor>,
  preprocessing: Preprocessing,
): Buffer {
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(12);
  head.write(STWB_MAGIC, 0, "ascii");
  head.writeUInt32LE(STWB_VERSION, 4);
  head.writeUInt32LE(entries.size, 8);
  chunks.push(head);

  for (const [name, tensor] of entries) {
    if (elementCount(tensor.dims) !== tensor.data.length) {
      throw new FormatError(
        `entry ${JSON.stringify(name)}: dims [${tensor.dims}] do not cover ${tensor.data.length} values`,
      );
    }
    const tag = Buffer.from(name, "utf-8");
    const desc = Buffer.alloc(4 + tag.length + 1 + 8 * tensor.dims.length);
    let off = desc.writeUInt32LE(tag.length, 0);
    off += tag.copy(desc, off);
    off = desc.writeUInt8(tensor.dims.length, off);
    for (const d of tensor.dims) {
      off = desc.writeBigUInt64LE(BigInt(d), off);
    }
    chunks.push(desc, f32ToLittleEndian(tensor.data));
  }

  const meta = Buffer.from(
    JSON.stringify({ means: preprocessing.means, scales: preprocessing.scales }),
    "utf-8",
  );
  const metaLen = Buffer.alloc(4);
  metaLen.writeUInt32LE(meta.length, 0);
  chunks.push(metaLen, meta);
  return Buffer.concat(chunks);
}

class Reader {
  private off = 0;

  constructor(private readonly buf: Buffer) {}

  bytes(n: number, what: string): Buffer {
    if (this.off + n > this.buf.length) {
      throw new FormatError(`truncated file while reading ${what}`);
    }
    const out = this.buf.subarray(this.off, this.off + n);
    this.off += n;
    return out;
  }

  u8(what: string): number {
    return this.bytes(1, what).readUInt8(0);
  }

  u32(what: string): number {
    return this.bytes(4, what).readUInt32LE(0);
  }

  u64(what: string): bigint {
    return this.bytes(8, what).readBigUInt64LE(0);
  }
}

export function unpackWeights(buf: Buffer): WeightFile {
  const r = new Reader(buf);
  if (r.bytes(4, "magic").toString("ascii") !== STWB_MAGIC) {
    throw new FormatError("bad magic: not an STWB weight file");
  }
  const version = r.u32("version");
  if (version !== STWB_VERSION) {
    throw new FormatError(`unsupported version ${version} (supported: ${STWB_VERSION})`);
  }

  const count = r.u32("array count");
  const entries = new Map<string, Tensor>();
  for (let i = 0; i < count; i++) {
    const nameLen = r.u32("name length");
    const name = r.bytes(nameLen, "name").toString("utf-8");
    const rank = r.u8("rank");
    const dims: number[] = [];
    for (let d = 0; d < rank; d++) {
      dims.push(Number(r.u64(`dims of ${name}`)));
    }
    const raw = r.bytes(4 * elementCount(dims), `data of ${name}`);
    entries.set(name, { dims, data: f32FromLittleEndian(raw) });
  }

  const metaLen = r.u32("metadata length");
  const meta = JSON.parse(r.bytes(metaLen, "metadata").toString("utf-8"));
  return {
    version,
    entries,
    preprocessing: {
      means: meta.means ?? [0.5, 0.5, 0.5],
      scales: meta.scales ?? [0.5, 0.5, 0.5],
    },
  };
}
