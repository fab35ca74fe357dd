import assert from "node:assert/strict";
import * as fs from "node:fs";
import * as path from "node:path";
import { test } from "node:test";
import { openDataset, UseAfterClose } from "../src/dataset.js";
import { asBytes, sampleDump, synthStore, tmpdir } from "./util.js";

const dir = tmpdir("ktb-dataset-");
const storePath = synthStore(dir, 60, 3);

function assertMatchesDump(mode: "in_memory" | "memmap" | "compressed",
                           batch: number, seq: number, seed: number) {
  const { dir: dumpDir, manifest } = sampleDump(storePath, dir, batch, seq, seed);
  const ds = openDataset(storePath, mode);
  try {
    const got = ds.sample(batch, seq, seed);
    for (const [name, meta] of Object.entries(manifest.fields)) {
      const field = got[name];
      assert.ok(field, `missing field ${name}`);
      assert.deepEqual([...field.shape], meta.shape, `${name} shape`);
      assert.equal(field.dtype, meta.dtype, `${name} dtype`);
      const disk = fs.readFileSync(path.join(dumpDir, meta.file));
      assert.ok(asBytes(field.data).equals(disk),
                `${name} bytes differ from the native CLI dump`);
    }
  } finally {
    ds.close();
  }
}

test("binding equals native CLI at the contract shape (64x16, in_memory)", () => {
  assertMatchesDump("in_memory", 64, 16, 7);
});

test("binding equals native CLI through the compressed path", () => {
  assertMatchesDump("compressed", 16, 8, 123);
});

test("binding equals native CLI through the memmap path", () => {
  assertMatchesDump("memmap", 16, 8, 2024);
});

test("shape contract for the default batch geometry", () => {
  const ds = openDataset(storePath, "in_memory");
  try {
    const batch = ds.sample(64, 16, 0);
    assert.deepEqual([...batch["tty_chars"].shape], [64, 17, 24, 80]);
    assert.deepEqual([...batch["tty_colors"].shape], [64, 17, 24, 80]);
    assert.deepEqual([...batch["tty_cursor"].shape], [64, 17, 2]);
    assert.deepEqual([...batch["prev_actions"].shape], [64, 17]);
    assert.deepEqual([...batch["actions"].shape], [64, 16]);
    assert.deepEqual([...batch["rewards"].shape], [64, 16]);
    assert.deepEqual([...batch["dones"].shape], [64, 16]);
    assert.deepEqual([...batch["episode_ids"].shape], [64]);
  } finally {
    ds.close();
  }
});

test("same seed same batch, different seed different batch", () => {
  const ds = openDataset(storePath, "in_memory");
  try {
    const a = ds.sample(8, 8, 55);
    const b = ds.sample(8, 8, 55);
    const c = ds.sample(8, 8, 56);
    assert.ok(asBytes(a["actions"].data).equals(asBytes(b["actions"].data)));
    assert.ok(!asBytes(a["actions"].data).equals(asBytes(c["actions"].data)));
  } finally {
    ds.close();
  }
});

test("all three binding modes agree with each other", () => {
  const handles = (["in_memory", "memmap", "compressed"] as const)
    .map((m) => openDataset(storePath, m));
  try {
    const batches = handles.map((h) => h.sample(12, 10, 9));
    for (const name of Object.keys(batches[0])) {
      const ref = asBytes(batches[0][name].data);
      assert.ok(ref.equals(asBytes(batches[1][name].data)), `${name} memmap`);
      assert.ok(ref.equals(asBytes(batches[2][name].data)), `${name} compressed`);
    }
  } finally {
    handles.forEach((h) => h.close());
  }
});

test("memmap artifact lifecycle", () => {
  const ds = openDataset(storePath, "memmap");
  const artifact = ds.artifactPath!;
  assert.ok(fs.existsSync(artifact));
  ds.close();
  assert.ok(!fs.existsSync(artifact), "close() must delete the artifact");
  assert.ok(fs.existsSync(storePath), "the store itself must survive");
});

test("use after close raises, including double close", () => {
  const ds = openDataset(storePath, "in_memory");
  ds.close();
  assert.throws(() => ds.sample(2, 4, 0), UseAfterClose);
  assert.throws(() => ds.close(), UseAfterClose);
});

test("windows respect episode bounds", () => {
  const ds = openDataset(storePath, "in_memory");
  try {
    const batch = ds.sample(32, 16, 77);
    const ids = batch["episode_ids"].data as BigInt64Array;
    const offs = batch["offsets"].data as BigInt64Array;
    for (let b = 0; b < 32; b++) {
      const t = ds.episodeLengths[Number(ids[b])];
      assert.ok(Number(offs[b]) >= 0);
      assert.ok(Number(offs[b]) <= t - 1 - 16);
    }
    const dones = batch["dones"].data as Uint8Array;
    assert.ok(dones.every((d) => d === 0));
  } finally {
    ds.close();
  }
});
