"""Content-addressed block store with a flat two-level Merkle DAG.

Content is split into fixed-size blocks.  A leaf node is the tag byte 0x00
followed by the block payload; an interior root node is the tag byte 0x01
followed by a length-prefixed list of (digest, size) links.  A node's CID is
the SHA-256 of its full encoding, and single-block content is its own root.
Every read re-hashes each block before returning bytes.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import IntegrityError, InvalidInputError, NotFoundError

DEFAULT_BLOCK_SIZE = 256 * 1024
MAX_CONTENT_BYTES = 64 * 1024**3

_LEAF = b"\x00"
_INTERIOR = b"\x01"
_DIGEST_LEN = 32


@dataclass(frozen=True, order=True)
class Cid:
    """SHA-256 digest of a DAG node encoding."""

    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != _DIGEST_LEN:
            raise InvalidInputError("digest must be 32 bytes")

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex


def _node_cid(node: bytes) -> Cid:
    return Cid(hashlib.sha256(node).digest())


def _encode_interior(links: list[tuple[Cid, int]]) -> bytes:
    parts = [_INTERIOR, struct.pack("<I", len(links))]
    for cid, size in links:
        parts.append(cid.digest)
        parts.append(struct.pack("<Q", size))
    return b"".join(parts)


class BlockStore:
    """One file per block under ``root``, named by the block's digest hex."""

    def __init__(self, root: str | Path, block_size: int = DEFAULT_BLOCK_SIZE):
        if block_size < 1:
            raise InvalidInputError("block_size must be positive")
        self.root = Path(root)
        self.block_size = block_size
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, cid: Cid) -> Path:
        return self.root / cid.hex

    def _chunks(self, content: bytes) -> list[bytes]:
        return [
            content[i : i + self.block_size]
            for i in range(0, len(content), self.block_size)
        ]

    def compute_cid(self, content: bytes) -> Cid:
        """Root CID of ``content`` without touching storage."""
        if len(content) == 0:
            raise InvalidInputError("content must be non-empty")
        if len(content) > MAX_CONTENT_BYTES:
            raise InvalidInputError("content exceeds the 64 GiB limit")
        chunks = self._chunks(content)
        leaf_cids = [_node_cid(_LEAF + c) for c in chunks]
        if len(chunks) == 1:
            return leaf_cids[0]
        links = [(cid, len(c)) for cid, c in zip(leaf_cids, chunks)]
        return _node_cid(_encode_interior(links))

    def _write_block(self, node: bytes) -> Cid:
        cid = _node_cid(node)
        path = self.path_for(cid)
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(node)
            os.replace(tmp, path)
        return cid

    def put(self, content: bytes) -> Cid:
        """Store ``content``; identical content always maps to the same CID."""
        if len(content) == 0:
            raise InvalidInputError("content must be non-empty")
        if len(content) > MAX_CONTENT_BYTES:
            raise InvalidInputError("content exceeds the 64 GiB limit")
        chunks = self._chunks(content)
        links = []
        for chunk in chunks:
            cid = self._write_block(_LEAF + chunk)
            links.append((cid, len(chunk)))
        if len(chunks) == 1:
            return links[0][0]
        return self._write_block(_encode_interior(links))

    def _read_block(self, cid: Cid) -> bytes:
        path = self.path_for(cid)
        if not path.exists():
            raise NotFoundError(f"no block for {cid.hex}")
        node = path.read_bytes()
        if _node_cid(node) != cid:
            raise IntegrityError(f"block {cid.hex} does not match its digest")
        return node

    def get(self, cid: Cid) -> bytes:
        """Reassemble and verify content; every block is re-hashed."""
        node = self._read_block(cid)
        if node[:1] == _LEAF:
            return node[1:]
        if node[:1] != _INTERIOR:
            raise IntegrityError(f"block {cid.hex} has an unknown node tag")
        (count,) = struct.unpack_from("<I", node, 1)
        offset = 5
        parts = []
        for _ in range(count):
            digest = node[offset : offset + _DIGEST_LEN]
            offset += _DIGEST_LEN
            (size,) = struct.unpack_from("<Q", node, offset)
            offset += 8
            leaf = self._read_block(Cid(digest))
            if leaf[:1] != _LEAF or len(leaf) - 1 != size:
                raise IntegrityError(f"leaf under {cid.hex} has the wrong shape")
            parts.append(leaf[1:])
        if offset != len(node):
            raise IntegrityError(f"root {cid.hex} has trailing bytes")
        return b"".join(parts)

    def verify(self, cid: Cid, content: bytes) -> bool:
        """True when ``content`` hashes to ``cid``; pure recomputation."""
        if len(content) == 0 or len(content) > MAX_CONTENT_BYTES:
            return False
        return self.compute_cid(content) == cid

    def block_count(self) -> int:
        return sum(1 for p in self.root.iterdir() if p.is_file() and p.suffix != ".tmp")
