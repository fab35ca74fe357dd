"""Self-describing chunked, compressed on-disk container for episodes.

Layout (all integers little-endian; full byte-level description in
docs/store_format.md):

    0   magic           "KTB1"
    4   format_version  u32 (currently 1)
    8   index_offset    u64, absolute offset of the index section
    16  header_len      u32
    20  header_json     UTF-8 JSON: task_id, episode_count, compression,
                        field_schema ([name, dtype, per-step shape] rows)
    ... payload         one compressed block per (episode, field), episodes
                        in order, fields in schema order within an episode
    index_offset:
        "KIDX" u32 episode_count
        per episode: u32 step_count,
                     per field: u64 offset, u64 clen, u64 ulen, u32 crc32,
                     u32 meta_len, meta_json
        u32 crc32 of the index bytes above

Blocks are compressed per field, not per episode, so a reader can fetch
actions or rewards without inflating screens. Every block carries a CRC-32
of its compressed bytes; a single flipped bit fails the read. A StoreHandle
reads with pread and is safe to share across threads.
"""

from __future__ import annotations

import json
import lzma
import os
import struct
import zlib
from dataclasses import dataclass
from hashlib import sha256
from typing import Callable, Sequence

import numpy as np

from .episode import FIELD_SPECS, EpisodeMetadata, EpisodeRecord, validate_episode
from .errors import (BadMagic, CorruptIndex, DecompressFailed, IndexOutOfRange,
                     IoError, ValidationFailed, VersionMismatch)

MAGIC = b"KTB1"
INDEX_MAGIC = b"KIDX"
FORMAT_VERSION = 1

_HEADER_PREFIX = struct.Struct("<4sIQI")
_FIELD_ENTRY = struct.Struct("<QQQI")


def _deflate(data: bytes) -> bytes:
    return zlib.compress(data, 6)


#: codec name -> (compress, decompress). "xz" fills the third, stream-codec
#: slot of the format; plug a faster codec in here if bindings become
#: available.
CODECS: dict[str, tuple[Callable[[bytes], bytes], Callable[[bytes], bytes]]] = {
    "none": (lambda b: b, lambda b: b),
    "deflate": (_deflate, zlib.decompress),
    "xz": (lambda b: lzma.compress(b, preset=1), lzma.decompress),
}


@dataclass(frozen=True)
class ContainerHeader:
    task_id: str
    episode_count: int
    compression: str
    field_schema: tuple[tuple[str, str, tuple[int, ...]], ...]
    format_version: int = FORMAT_VERSION
    index_offset: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "task_id": self.task_id,
            "episode_count": self.episode_count,
            "compression": self.compression,
            "field_schema": [[n, d, list(s)] for n, d, s in self.field_schema],
        })


@dataclass(frozen=True)
class BlockRef:
    offset: int
    clen: int
    ulen: int
    crc32: int


@dataclass(frozen=True)
class EpisodeIndexEntry:
    step_count: int
    blocks: tuple[BlockRef, ...]       # one per schema field, in order
    metadata: dict


@dataclass(frozen=True)
class WriteSummary:
    path: str
    episode_count: int
    raw_bytes: int
    compressed_bytes: int


def _default_schema() -> tuple[tuple[str, str, tuple[int, ...]], ...]:
    return tuple((name, dtype, shape) for name, (dtype, shape) in FIELD_SPECS.items())


def write_store(path: str | os.PathLike, episodes: Sequence[EpisodeRecord],
                compression: str = "deflate") -> WriteSummary:
    """Write episodes into a new store file.

    All episodes must validate and share one task id; the episode order on
    disk is the input order, so identical input produces identical bytes.
    """
    if compression not in CODECS:
        raise ValidationFailed([f"unknown codec {compression!r}"])
    episodes = list(episodes)
    if not episodes:
        raise ValidationFailed(["episode list is empty"])

    problems = []
    task_id = str(episodes[0].metadata.character)
    for i, ep in enumerate(episodes):
        for v in validate_episode(ep):
            problems.append(f"episode {i}: {v}")
        if str(ep.metadata.character) != task_id:
            problems.append(f"episode {i}: task {ep.metadata.character} != {task_id}")
    if problems:
        raise ValidationFailed(problems)

    compress, _ = CODECS[compression]
    schema = _default_schema()
    header = ContainerHeader(task_id=task_id, episode_count=len(episodes),
                             compression=compression, field_schema=schema)
    header_json = header.to_json().encode()

    raw_total = 0
    comp_total = 0
    try:
        with open(path, "wb") as f:
            f.write(_HEADER_PREFIX.pack(MAGIC, FORMAT_VERSION, 0, len(header_json)))
            f.write(header_json)

            entries: list[tuple[int, list[tuple[int, int, int, int]], bytes]] = []
            for ep in episodes:
                blocks = []
                for name, _dtype, _shape in schema:
                    raw = np.ascontiguousarray(ep.field(name)).tobytes()
                    comp = compress(raw)
                    offset = f.tell()
                    f.write(comp)
                    blocks.append((offset, len(comp), len(raw), zlib.crc32(comp)))
                    raw_total += len(raw)
                    comp_total += len(comp)
                meta = json.dumps(ep.metadata.to_dict()).encode()
                entries.append((ep.length, blocks, meta))

            index_offset = f.tell()
            idx = bytearray()
            idx += INDEX_MAGIC
            idx += struct.pack("<I", len(episodes))
            for step_count, blocks, meta in entries:
                idx += struct.pack("<I", step_count)
                for block in blocks:
                    idx += _FIELD_ENTRY.pack(*block)
                idx += struct.pack("<I", len(meta))
                idx += meta
            idx += struct.pack("<I", zlib.crc32(bytes(idx)))
            f.write(idx)

            f.seek(8)
            f.write(struct.pack("<Q", index_offset))
    except OSError as e:
        raise IoError(str(e)) from e

    return WriteSummary(path=str(path), episode_count=len(episodes),
                        raw_bytes=raw_total, compressed_bytes=comp_total)


class StoreHandle:
    """Read-only view of a store: parsed header and index, lazy payload."""

    def __init__(self, path: str, header: ContainerHeader,
                 index: list[EpisodeIndexEntry], fd: int):
        self.path = path
        self.header = header
        self.index = index
        self._fd = fd
        self._field_pos = {name: i for i, (name, _, _) in enumerate(header.field_schema)}

    # separated so tests can instrument exactly which byte ranges get read
    def _pread(self, n: int, offset: int) -> bytes:
        return os.pread(self._fd, n, offset)

    @property
    def episode_count(self) -> int:
        return self.header.episode_count

    @property
    def episode_lengths(self) -> np.ndarray:
        return np.asarray([e.step_count for e in self.index], dtype=np.int64)

    def _check_idx(self, idx: int):
        if not 0 <= idx < self.episode_count:
            raise IndexOutOfRange(f"episode {idx} not in [0, {self.episode_count})")

    def read_block(self, idx: int, name: str) -> bytes:
        """Raw decompressed bytes of one field of one episode."""
        self._check_idx(idx)
        entry = self.index[idx]
        block = entry.blocks[self._field_pos[name]]
        comp = self._pread(block.clen, block.offset)
        if len(comp) != block.clen:
            raise DecompressFailed(f"episode {idx} field {name}: short read")
        if zlib.crc32(comp) != block.crc32:
            raise DecompressFailed(f"episode {idx} field {name}: checksum mismatch")
        _, decompress = CODECS[self.header.compression]
        try:
            raw = decompress(comp)
        except Exception as e:
            raise DecompressFailed(f"episode {idx} field {name}: {e}") from e
        if len(raw) != block.ulen:
            raise DecompressFailed(
                f"episode {idx} field {name}: {len(raw)} bytes, expected {block.ulen}")
        return raw

    def read_field(self, idx: int, name: str) -> np.ndarray:
        _, dtype, shape = self.header.field_schema[self._field_pos[name]]
        raw = self.read_block(idx, name)
        arr = np.frombuffer(raw, dtype=np.dtype(dtype))
        return arr.reshape((self.index[idx].step_count,) + tuple(shape))

    def read_episode(self, idx: int) -> EpisodeRecord:
        self._check_idx(idx)
        fields = {name: self.read_field(idx, name) for name, _, _ in self.header.field_schema
                  if name in FIELD_SPECS}
        meta = EpisodeMetadata.from_dict(self.index[idx].metadata)
        return EpisodeRecord(metadata=meta, **fields)

    def episode_checksum(self, idx: int) -> str:
        """sha256 over the decompressed field bytes in schema order; equal
        digests mean equal episode content regardless of codec."""
        self._check_idx(idx)
        h = sha256()
        for name, _, _ in self.header.field_schema:
            h.update(self.read_block(idx, name))
        return h.hexdigest()

    def close(self):
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_store(path: str | os.PathLike) -> StoreHandle:
    """Parse header and index; no payload is touched until a read."""
    path = str(path)
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError as e:
        raise IoError(str(e)) from e
    try:
        file_size = os.fstat(fd).st_size
        prefix = os.pread(fd, _HEADER_PREFIX.size, 0)
        if len(prefix) < _HEADER_PREFIX.size:
            raise BadMagic(f"{path}: file too short for a store header")
        magic, version, index_offset, header_len = _HEADER_PREFIX.unpack(prefix)
        if magic != MAGIC:
            raise BadMagic(f"{path}: magic {magic!r} != {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"{path}: format version {version}, "
                                  f"reader supports {FORMAT_VERSION}")
        header_raw = os.pread(fd, header_len, _HEADER_PREFIX.size)
        if len(header_raw) < header_len:
            raise CorruptIndex(f"{path}: truncated header")
        try:
            meta = json.loads(header_raw)
        except ValueError as e:
            raise CorruptIndex(f"{path}: header JSON: {e}") from e
        if meta.get("compression") not in CODECS:
            raise CorruptIndex(f"{path}: unknown codec {meta.get('compression')!r}")
        header = ContainerHeader(
            task_id=meta["task_id"],
            episode_count=int(meta["episode_count"]),
            compression=meta["compression"],
            field_schema=tuple((n, d, tuple(s)) for n, d, s in meta["field_schema"]),
            index_offset=index_offset,
        )
        for required in FIELD_SPECS:
            if required not in [n for n, _, _ in header.field_schema]:
                raise CorruptIndex(f"{path}: schema is missing field {required!r}")

        if not _HEADER_PREFIX.size + header_len <= index_offset < file_size:
            raise CorruptIndex(f"{path}: index offset {index_offset} outside file")
        idx_raw = os.pread(fd, file_size - index_offset, index_offset)
        index = _parse_index(idx_raw, header, path)
        return StoreHandle(path, header, index, fd)
    except Exception:
        os.close(fd)
        raise


def _parse_index(raw: bytes, header: ContainerHeader, path: str) -> list[EpisodeIndexEntry]:
    if len(raw) < 12 or raw[:4] != INDEX_MAGIC:
        raise CorruptIndex(f"{path}: index magic missing")
    body, crc_bytes = raw[:-4], raw[-4:]
    if zlib.crc32(body) != struct.unpack("<I", crc_bytes)[0]:
        raise CorruptIndex(f"{path}: index checksum mismatch")
    pos = 4
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    if count != header.episode_count:
        raise CorruptIndex(f"{path}: index has {count} episodes, "
                           f"header says {header.episode_count}")
    n_fields = len(header.field_schema)
    entries = []
    try:
        for _ in range(count):
            (steps,) = struct.unpack_from("<I", body, pos)
            pos += 4
            blocks = []
            prev_off = -1
            for _f in range(n_fields):
                off, clen, ulen, crc = _FIELD_ENTRY.unpack_from(body, pos)
                pos += _FIELD_ENTRY.size
                if off <= prev_off:
                    raise CorruptIndex(f"{path}: block offsets not increasing")
                prev_off = off
                blocks.append(BlockRef(off, clen, ulen, crc))
            (meta_len,) = struct.unpack_from("<I", body, pos)
            pos += 4
            meta = json.loads(body[pos:pos + meta_len])
            pos += meta_len
            entries.append(EpisodeIndexEntry(steps, tuple(blocks), meta))
    except (struct.error, ValueError) as e:
        raise CorruptIndex(f"{path}: index truncated or garbled: {e}") from e
    if pos != len(body):
        raise CorruptIndex(f"{path}: {len(body) - pos} trailing index bytes")
    return entries


def store_checksum(handle: StoreHandle) -> list[str]:
    """Per-episode content digests (see StoreHandle.episode_checksum)."""
    return [handle.episode_checksum(i) for i in range(handle.episode_count)]


def inspect_store(path: str | os.PathLike) -> dict:
    """Header and index as a JSON-friendly dict (CLI `store inspect`)."""
    with open_store(path) as h:
        return {
            "path": h.path,
            "magic": MAGIC.decode(),
            "format_version": h.header.format_version,
            "task_id": h.header.task_id,
            "episode_count": h.header.episode_count,
            "compression": h.header.compression,
            "index_offset": h.header.index_offset,
            "field_schema": [{"name": n, "dtype": d, "per_step_shape": list(s)}
                             for n, d, s in h.header.field_schema],
            "episodes": [
                {
                    "step_count": e.step_count,
                    "metadata": e.metadata,
                    "blocks": {name: {"offset": b.offset, "clen": b.clen,
                                      "ulen": b.ulen, "crc32": b.crc32}
                               for (name, _, _), b in zip(h.header.field_schema, e.blocks)},
                }
                for e in h.index
            ],
        }
