/**
 * Read-only KTB1 store access (see docs/store_format.md in the engine repo
 * for the byte-exact layout). Reads the header and index eagerly, payload
 * blocks on demand with positional reads, verifying each block's CRC-32
 * before inflating.
 */

import * as fs from "node:fs";
import * as zlib from "node:zlib";
import { crc32 } from "./crc32.js";

export const MAGIC = "KTB1";
export const FORMAT_VERSION = 1;

export type DType = "u1" | "i1" | "i2" | "i4";

export interface FieldSpec {
  name: string;
  dtype: DType;
  perStepShape: number[];
}

export interface BlockRef {
  offset: number;
  clen: number;
  ulen: number;
  crc32: number;
}

export interface EpisodeIndexEntry {
  stepCount: number;
  blocks: BlockRef[];
  metadata: Record<string, unknown>;
}

export interface ContainerHeader {
  taskId: string;
  episodeCount: number;
  compression: string;
  fieldSchema: FieldSpec[];
  indexOffset: number;
}

export class StoreError extends Error {}
export class BadMagic extends StoreError {}
export class VersionMismatch extends StoreError {}
export class CorruptIndex extends StoreError {}
export class DecompressFailed extends StoreError {}
export class IndexOutOfRange extends StoreError {}

export const ELEMENT_SIZE: Record<DType, number> = {
  u1: 1, i1: 1, i2: 2, i4: 4,
};

export function elementsPerStep(spec: FieldSpec): number {
  return spec.perStepShape.reduce((a, b) => a * b, 1);
}

function pread(fd: number, length: number, offset: number): Buffer {
  const out = Buffer.alloc(length);
  let done = 0;
  while (done < length) {
    const n = fs.readSync(fd, out, done, length - done, offset + done);
    if (n <= 0) break;
    done += n;
  }
  if (done !== length) {
    throw new CorruptIndex(`short read: wanted ${length}, got ${done}`);
  }
  return out;
}

export class StoreHandle {
  readonly path: string;
  readonly header: ContainerHeader;
  readonly index: EpisodeIndexEntry[];
  private fd: number;
  private fieldPos: Map<string, number>;

  constructor(path: string, header: ContainerHeader,
              index: EpisodeIndexEntry[], fd: number) {
    this.path = path;
    this.header = header;
    this.index = index;
    this.fd = fd;
    this.fieldPos = new Map(header.fieldSchema.map((f, i) => [f.name, i]));
  }

  get episodeCount(): number {
    return this.header.episodeCount;
  }

  episodeLengths(): Int32Array {
    return Int32Array.from(this.index, (e) => e.stepCount);
  }

  /** Decompressed raw bytes of one field of one episode. */
  readBlock(idx: number, name: string): Buffer {
    if (idx < 0 || idx >= this.episodeCount) {
      throw new IndexOutOfRange(`episode ${idx} not in [0, ${this.episodeCount})`);
    }
    const pos = this.fieldPos.get(name);
    if (pos === undefined) throw new StoreError(`unknown field ${name}`);
    const block = this.index[idx].blocks[pos];
    const comp = pread(this.fd, block.clen, block.offset);
    if (crc32(comp) !== block.crc32) {
      throw new DecompressFailed(`episode ${idx} field ${name}: checksum mismatch`);
    }
    let raw: Buffer;
    if (this.header.compression === "none") {
      raw = comp;
    } else if (this.header.compression === "deflate") {
      raw = zlib.inflateSync(comp);
    } else {
      throw new StoreError(
        `codec ${this.header.compression} is not supported by the binding ` +
        `(use none or deflate for interchange)`);
    }
    if (raw.length !== block.ulen) {
      throw new DecompressFailed(
        `episode ${idx} field ${name}: ${raw.length} bytes, expected ${block.ulen}`);
    }
    return raw;
  }

  close(): void {
    if (this.fd >= 0) {
      fs.closeSync(this.fd);
      this.fd = -1;
    }
  }
}

export function openStore(path: string): StoreHandle {
  const fd = fs.openSync(path, "r");
  try {
    const fileSize = fs.fstatSync(fd).size;
    const prefix = pread(fd, 20, 0);
    if (prefix.toString("latin1", 0, 4) !== MAGIC) {
      throw new BadMagic(`${path}: not a KTB1 store`);
    }
    const version = prefix.readUInt32LE(4);
    if (version !== FORMAT_VERSION) {
      throw new VersionMismatch(`${path}: format version ${version}`);
    }
    const indexOffset = Number(prefix.readBigUInt64LE(8));
    const headerLen = prefix.readUInt32LE(16);
    const headerJson = JSON.parse(pread(fd, headerLen, 20).toString("utf8"));
    const schema: FieldSpec[] = headerJson.field_schema.map(
      (row: [string, DType, number[]]) => ({
        name: row[0], dtype: row[1], perStepShape: row[2],
      }));
    const header: ContainerHeader = {
      taskId: headerJson.task_id,
      episodeCount: headerJson.episode_count,
      compression: headerJson.compression,
      fieldSchema: schema,
      indexOffset,
    };
    if (indexOffset < 20 + headerLen || indexOffset >= fileSize) {
      throw new CorruptIndex(`${path}: index offset outside file`);
    }
    const idxRaw = pread(fd, fileSize - indexOffset, indexOffset);
    const index = parseIndex(idxRaw, header, path);
    return new StoreHandle(path, header, index, fd);
  } catch (err) {
    fs.closeSync(fd);
    throw err;
  }
}

function parseIndex(raw: Buffer, header: ContainerHeader,
                    path: string): EpisodeIndexEntry[] {
  if (raw.length < 12 || raw.toString("latin1", 0, 4) !== "KIDX") {
    throw new CorruptIndex(`${path}: index magic missing`);
  }
  const body = raw.subarray(0, raw.length - 4);
  const storedCrc = raw.readUInt32LE(raw.length - 4);
  if (crc32(body) !== storedCrc) {
    throw new CorruptIndex(`${path}: index checksum mismatch`);
  }
  let pos = 4;
  const count = body.readUInt32LE(pos);
  pos += 4;
  if (count !== header.episodeCount) {
    throw new CorruptIndex(`${path}: index count ${count} != header`);
  }
  const entries: EpisodeIndexEntry[] = [];
  try {
    for (let e = 0; e < count; e++) {
      const stepCount = body.readUInt32LE(pos);
      pos += 4;
      const blocks: BlockRef[] = [];
      for (let f = 0; f < header.fieldSchema.length; f++) {
        blocks.push({
          offset: Number(body.readBigUInt64LE(pos)),
          clen: Number(body.readBigUInt64LE(pos + 8)),
          ulen: Number(body.readBigUInt64LE(pos + 16)),
          crc32: body.readUInt32LE(pos + 24),
        });
        pos += 28;
      }
      const metaLen = body.readUInt32LE(pos);
      pos += 4;
      const metadata = JSON.parse(body.toString("utf8", pos, pos + metaLen));
      pos += metaLen;
      entries.push({ stepCount, blocks, metadata });
    }
  } catch (err) {
    if (err instanceof CorruptIndex) throw err;
    throw new CorruptIndex(`${path}: index truncated or garbled: ${err}`);
  }
  if (pos !== body.length) {
    throw new CorruptIndex(`${path}: trailing index bytes`);
  }
  return entries;
}
