import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

/** Run the engine CLI (`ktb ...`), falling back to `python3 -m ktb.cli`. */
export function runCli(args: string[]): string {
  try {
    return execFileSync("ktb", args, { encoding: "utf8" });
  } catch (err: unknown) {
    if ((err as NodeJS.ErrnoException).code !== "ENOENT") throw err;
    return execFileSync("python3", ["-m", "ktb.cli", ...args],
                        { encoding: "utf8" });
  }
}

export function tmpdir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

export function synthStore(dir: string, episodes: number, seed: number): string {
  const store = path.join(dir, "synth.ktb");
  runCli(["synth", "--task", "mon-hum-neu", "--episodes", String(episodes),
          "--seed", String(seed), "--out", store]);
  return store;
}

export interface DumpManifest {
  batch_size: number;
  seq_len: number;
  seed: number;
  mode: string;
  fields: Record<string, { dtype: string; shape: number[]; file: string }>;
}

export function sampleDump(store: string, dir: string, batch: number,
                           seq: number, seed: number,
                           mode = "in_memory"): { dir: string; manifest: DumpManifest } {
  const out = path.join(dir, `dump-${mode}-${seed}`);
  runCli(["sample", "--store", store, "--batch", String(batch),
          "--seq", String(seq), "--seed", String(seed), "--mode", mode,
          "--out", out]);
  const manifest = JSON.parse(
    fs.readFileSync(path.join(out, "manifest.json"), "utf8")) as DumpManifest;
  return { dir: out, manifest };
}

export function asBytes(arr: { buffer: ArrayBufferLike; byteOffset: number;
                               byteLength: number }): Buffer {
  return Buffer.from(arr.buffer as ArrayBuffer, arr.byteOffset, arr.byteLength);
}
