/**
 * Dataset opening and sequence sampling over KTB1 stores, replicating the
 * engine's sampler draw for draw (docs/sampling.md): equal
 * (store, batch_size, seq_len, seed) must give byte-identical batches here
 * and in the native CLI. Three modes:
 *
 *   in_memory   every field inflated into RAM up front
 *   memmap      one-time decompression to the ".decompressed" sibling
 *               artifact, windows read from it positionally on demand
 *   compressed  touched episodes are inflated per access
 *
 * close() releases everything; for memmap it also deletes the artifact
 * (never the store). Batches are plain typed arrays; treat them as
 * read-only views of engine output.
 */

import * as fs from "node:fs";
import { SplitMix64 } from "./prng.js";
import {
  ELEMENT_SIZE, FieldSpec, StoreError, StoreHandle, elementsPerStep,
  openStore,
} from "./store.js";

export type LoaderMode = "in_memory" | "memmap" | "compressed";

export class UseAfterClose extends StoreError {}
export class AllEpisodesTooShort extends StoreError {}

export type BatchArray =
  | Uint8Array | Int8Array | Int16Array | Int32Array | BigInt64Array;

export interface BatchField {
  readonly dtype: string;
  readonly shape: readonly number[];
  readonly data: BatchArray;
}

export type SequenceBatch = Record<string, BatchField>;

const CORE_FIELDS = ["tty_chars", "tty_colors", "tty_cursor",
                     "actions", "rewards", "dones"] as const;

function typedView(dtype: string, bytes: Buffer): BatchArray {
  // copy into a fresh ArrayBuffer: pool Buffers may be misaligned
  const ab = new ArrayBuffer(bytes.length);
  new Uint8Array(ab).set(bytes);
  switch (dtype) {
    case "u1": return new Uint8Array(ab);
    case "i1": return new Int8Array(ab);
    case "i2": return new Int16Array(ab);
    case "i4": return new Int32Array(ab);
    default: throw new StoreError(`unsupported dtype ${dtype}`);
  }
}

export class DatasetHandle {
  readonly mode: LoaderMode;
  readonly store: StoreHandle;
  readonly episodeLengths: Int32Array;
  readonly episodeOffsets: Float64Array;   // exact: step counts < 2^53
  readonly totalTransitions: number;
  readonly artifactPath: string | null;
  private inMemory: Map<string, Buffer> | null = null;
  private artifactFd = -1;
  private fieldRegion = new Map<string, number>();
  private cacheIdx = -1;
  private cache = new Map<string, Buffer>();
  private closed = false;

  constructor(store: StoreHandle, mode: LoaderMode) {
    this.store = store;
    this.mode = mode;
    this.episodeLengths = store.episodeLengths();
    this.episodeOffsets = new Float64Array(this.episodeLengths.length);
    let acc = 0;
    for (let i = 0; i < this.episodeLengths.length; i++) {
      this.episodeOffsets[i] = acc;
      acc += this.episodeLengths[i];
    }
    this.totalTransitions = acc;

    if (mode === "in_memory") {
      this.inMemory = new Map();
      for (const f of store.header.fieldSchema) {
        const chunks: Buffer[] = [];
        for (let e = 0; e < store.episodeCount; e++) {
          chunks.push(store.readBlock(e, f.name));
        }
        this.inMemory.set(f.name, Buffer.concat(chunks));
      }
      this.artifactPath = null;
    } else if (mode === "memmap") {
      this.artifactPath = store.path + ".decompressed";
      this.ensureArtifact();
      this.artifactFd = fs.openSync(this.artifactPath, "r");
      let region = 0;
      for (const f of store.header.fieldSchema) {
        this.fieldRegion.set(f.name, region);
        region += this.totalTransitions * this.stepBytes(f.name);
      }
    } else {
      this.artifactPath = null;
    }
  }

  private spec(name: string): FieldSpec {
    const f = this.store.header.fieldSchema.find((s) => s.name === name);
    if (!f) throw new StoreError(`unknown field ${name}`);
    return f;
  }

  private stepBytes(name: string): number {
    const f = this.spec(name);
    return elementsPerStep(f) * ELEMENT_SIZE[f.dtype];
  }

  private ensureArtifact(): void {
    const expected = this.store.header.fieldSchema.reduce(
      (acc, f) => acc + this.totalTransitions * this.stepBytes(f.name), 0);
    const path = this.artifactPath!;
    if (fs.existsSync(path) && fs.statSync(path).size === expected) return;
    const lock = path + ".lock";
    const deadline = Date.now() + 600_000;
    let lockFd = -1;
    for (;;) {
      try {
        lockFd = fs.openSync(lock, "wx");
        break;
      } catch {
        if (Date.now() > deadline) throw new StoreError(`timed out on ${lock}`);
        if (fs.existsSync(path) && fs.statSync(path).size === expected) return;
      }
    }
    try {
      const tmp = path + ".tmp";
      const out = fs.openSync(tmp, "w");
      try {
        for (const f of this.store.header.fieldSchema) {
          for (let e = 0; e < this.store.episodeCount; e++) {
            fs.writeSync(out, this.store.readBlock(e, f.name));
          }
        }
      } finally {
        fs.closeSync(out);
      }
      fs.renameSync(tmp, path);
    } finally {
      fs.closeSync(lockFd);
      fs.unlinkSync(lock);
    }
  }

  private checkOpen(): void {
    if (this.closed) throw new UseAfterClose(`dataset ${this.store.path} is closed`);
  }

  /** Bytes of `count` consecutive steps of one episode, starting at `step`. */
  private readSpan(name: string, episode: number, step: number,
                   count: number): Buffer {
    const sb = this.stepBytes(name);
    const globalStep = this.episodeOffsets[episode] + step;
    if (this.inMemory) {
      const src = this.inMemory.get(name)!;
      return src.subarray(globalStep * sb, (globalStep + count) * sb);
    }
    if (this.mode === "memmap") {
      const offset = this.fieldRegion.get(name)! + globalStep * sb;
      const out = Buffer.alloc(count * sb);
      let done = 0;
      while (done < out.length) {
        const n = fs.readSync(this.artifactFd, out, done, out.length - done,
                              offset + done);
        if (n <= 0) throw new StoreError("artifact read failed");
        done += n;
      }
      return out;
    }
    // compressed: inflate the episode once, slice from the cache
    if (this.cacheIdx !== episode) {
      this.cache.clear();
      for (const f of this.store.header.fieldSchema) {
        this.cache.set(f.name, this.store.readBlock(episode, f.name));
      }
      this.cacheIdx = episode;
    }
    return this.cache.get(name)!.subarray(step * sb, (step + count) * sb);
  }

  sample(batchSize: number, seqLen: number, seed: number,
         padPolicy: "reject_short" | "left_clamp" = "reject_short"): SequenceBatch {
    this.checkOpen();
    if (batchSize < 1 || seqLen < 1) {
      throw new RangeError("batchSize and seqLen must be >= 1");
    }
    const lengths = this.episodeLengths;
    const nEps = lengths.length;
    const weights = new Float64Array(nEps);
    let total = 0;
    for (let i = 0; i < nEps; i++) {
      const full = Math.max(lengths[i] - seqLen, 0);
      weights[i] = padPolicy === "left_clamp" ? Math.max(full, 1) : full;
      total += weights[i];
    }
    if (total === 0) {
      throw new AllEpisodesTooShort(
        `no episode admits a window of length ${seqLen}`);
    }
    const cum = new Float64Array(nEps);
    let acc = 0;
    for (let i = 0; i < nEps; i++) {
      acc += weights[i];
      cum[i] = acc;
    }

    const prng = new SplitMix64(seed);
    const episodes = new BigInt64Array(batchSize);
    const starts = new BigInt64Array(batchSize);
    const rows: Array<{ e: number; s: number; t: number }> = [];
    for (let b = 0; b < batchSize; b++) {
      const r = prng.bounded(total);
      let lo = 0, hi = nEps - 1;
      while (lo < hi) {                    // first e with cum[e] > r
        const mid = (lo + hi) >> 1;
        if (cum[mid] > r) hi = mid;
        else lo = mid + 1;
      }
      const e = lo;
      const nStarts = Math.max(lengths[e] - seqLen, 1);
      const s = prng.bounded(nStarts);
      episodes[b] = BigInt(e);
      starts[b] = BigInt(s);
      rows.push({ e, s, t: lengths[e] });
    }

    const batch: Record<string, BatchField> = {};
    const obsLen = seqLen + 1;
    for (const name of CORE_FIELDS) {
      const f = this.spec(name);
      const isObs = name === "tty_chars" || name === "tty_colors"
        || name === "tty_cursor";
      const length = isObs ? obsLen : seqLen;
      const sb = this.stepBytes(name);
      const out = Buffer.alloc(batchSize * length * sb);
      for (let b = 0; b < batchSize; b++) {
        const { e, s, t } = rows[b];
        const last = t - 1;
        const contiguous = Math.min(length, last - s + 1);
        this.readSpan(name, e, s, contiguous)
          .copy(out, b * length * sb);
        for (let pad = contiguous; pad < length; pad++) {
          this.readSpan(name, e, last, 1).copy(out, (b * length + pad) * sb);
        }
      }
      batch[name] = {
        dtype: f.dtype,
        shape: [batchSize, length, ...f.perStepShape],
        data: typedView(f.dtype, out),
      };
    }

    // prev_actions: action at step min(s+t, T-1) - 1, 0 before the episode
    const prev = Buffer.alloc(batchSize * obsLen);
    for (let b = 0; b < batchSize; b++) {
      const { e, s, t } = rows[b];
      for (let k = 0; k < obsLen; k++) {
        const step = Math.min(s + k, t - 1) - 1;
        prev[b * obsLen + k] = step < 0
          ? 0 : this.readSpan("actions", e, step, 1)[0];
      }
    }
    batch["prev_actions"] = {
      dtype: "u1", shape: [batchSize, obsLen], data: typedView("u1", prev),
    };

    const mask = Buffer.alloc(batchSize * seqLen);
    for (let b = 0; b < batchSize; b++) {
      const { s, t } = rows[b];
      for (let k = 0; k < seqLen; k++) {
        mask[b * seqLen + k] = s + k <= t - 1 ? 1 : 0;
      }
    }
    batch["pad_mask"] = {
      dtype: "u1", shape: [batchSize, seqLen], data: typedView("u1", mask),
    };
    batch["episode_ids"] = {
      dtype: "i8", shape: [batchSize], data: episodes,
    };
    batch["offsets"] = {
      dtype: "i8", shape: [batchSize], data: starts,
    };
    return batch;
  }

  close(): void {
    if (this.closed) throw new UseAfterClose("dataset closed twice");
    this.closed = true;
    this.inMemory = null;
    this.cache.clear();
    if (this.artifactFd >= 0) {
      fs.closeSync(this.artifactFd);
      this.artifactFd = -1;
    }
    if (this.mode === "memmap" && this.artifactPath) {
      try {
        fs.unlinkSync(this.artifactPath);
      } catch {
        // already gone: another handle cleaned up first
      }
    }
    this.store.close();
  }
}

export function openDataset(path: string, mode: LoaderMode): DatasetHandle {
  const store = openStore(path);
  try {
    return new DatasetHandle(store, mode);
  } catch (err) {
    store.close();
    throw err;
  }
}
