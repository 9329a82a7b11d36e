"""
On-disk snapshot of an IndexShardSet.

Directory layout::

    manifest.json            format_version, hasher config, shard list
    shard_<category>.fwd     "STFW" header, then sections ids / embeddings / attributes
    shard_<category>.inv     "STIV" header, then sections keys / postings

Every section is ``<u64 length> <payload> <u64 checksum>`` where the checksum
is an 8-byte BLAKE2b digest of the payload read as little-endian. All
integers are little-endian. Embeddings are a fixed-stride float32 block in
ordinal order; postings are per-key ``<u32 count>`` followed by u32 deltas
(first value absolute), keys in sorted order.
"""

import hashlib
import json
import logging
import os
import struct
from typing import Dict, List, Tuple
from urllib.parse import quote

import numpy as np

from shoptoken.errors import SnapshotError, SnapshotIntegrityError, UnsupportedVersionError
from shoptoken.IndexShardSet import FORMAT_VERSION, ForwardIndex, IndexShard, IndexShardSet
from shoptoken.LshHasher import LshHasher

MANIFEST_NAME = 'manifest.json'
FORWARD_MAGIC = b'STFW'
INVERTED_MAGIC = b'STIV'

_U32 = struct.Struct('<I')
_U64 = struct.Struct('<Q')


def checksum(payload: bytes) -> int:
    return _U64.unpack(hashlib.blake2b(payload, digest_size=8).digest())[0]


def shard_file_stem(category: str) -> str:
    return 'shard_' + quote(category, safe='')


def _section(payload: bytes) -> bytes:
    return _U64.pack(len(payload)) + payload + _U64.pack(checksum(payload))


def _encode_strings(values: List[str]) -> bytes:
    parts = []
    for value in values:
        encoded = value.encode('utf-8')
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
    return b''.join(parts)


class _ByteReader:
    """Sequential reader that reports truncation against a named section."""

    def __init__(self, data: bytes, section: str):
        self.data = data
        self.offset = 0
        self.section = section

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if size < 0 or end > len(self.data):
            raise SnapshotIntegrityError(self.section, "truncated")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def at_end(self) -> bool:
        return self.offset == len(self.data)

    def section_payload(self, name: str) -> bytes:
        self.section = name
        length = self.u64()
        payload = self.take(length)
        stored = self.u64()
        if checksum(payload) != stored:
            raise SnapshotIntegrityError(name, "checksum mismatch")
        return payload

    def strings(self, count: int) -> List[str]:
        values = []
        for _ in range(count):
            size = self.u32()
            try:
                values.append(self.take(size).decode('utf-8'))
            except UnicodeDecodeError as e:
                raise SnapshotIntegrityError(self.section, f"invalid UTF-8 ({e})") from e
        return values


class SnapshotHandler:
    """
    Writes and reads index snapshots in a directory.
    """

    def __init__(self, directory: str):
        """
        Args:
            directory (str): Snapshot directory
        """
        self.directory = os.fspath(directory)
        self.logger = logging.getLogger(__name__)

    def _path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def save(self, shard_set: IndexShardSet):
        os.makedirs(self.directory, exist_ok=True)
        shard_entries = []
        for category in shard_set.categories():
            shard = shard_set.shards[category]
            stem = shard_file_stem(category)
            with open(self._path(stem + '.fwd'), 'wb') as stream:
                stream.write(self._encode_forward(shard))
            with open(self._path(stem + '.inv'), 'wb') as stream:
                stream.write(self._encode_inverted(shard))
            shard_entries.append({
                'category': category,
                'file_stem': stem,
                'num_docs': shard.num_docs,
                'num_keys': len(shard.inverted),
            })

        manifest = {
            'format_version': shard_set.format_version,
            'hasher': shard_set.hasher.config(),
            'shards': shard_entries,
        }
        with open(self._path(MANIFEST_NAME), 'w', encoding='utf-8') as stream:
            json.dump(manifest, stream, indent=2, sort_keys=True)
            stream.write('\n')
        self.logger.info(f"Saved {len(shard_entries)} shards ({shard_set.num_docs} docs) to {self.directory}")

    @staticmethod
    def _encode_forward(shard: IndexShard) -> bytes:
        forward = shard.forward
        header = FORWARD_MAGIC + struct.pack('<III', FORMAT_VERSION, len(forward), forward.dim)
        ids = _encode_strings(forward.ids)
        embeddings = np.ascontiguousarray(forward.embeddings, dtype='<f4').tobytes()
        attributes = ''.join(
            json.dumps(attrs, sort_keys=True, separators=(',', ':')) + '\n'
            for attrs in forward.attributes
        ).encode('utf-8')
        return header + _section(ids) + _section(embeddings) + _section(attributes)

    @staticmethod
    def _encode_inverted(shard: IndexShard) -> bytes:
        keys = sorted(shard.inverted)
        header = INVERTED_MAGIC + struct.pack('<II', FORMAT_VERSION, len(keys))
        postings = []
        for key in keys:
            ordinals = shard.inverted[key]
            deltas = np.diff(ordinals, prepend=0).astype('<u4')
            postings.append(_U32.pack(len(ordinals)))
            postings.append(deltas.tobytes())
        return header + _section(_encode_strings(keys)) + _section(b''.join(postings))

    def load(self) -> IndexShardSet:
        manifest_path = self._path(MANIFEST_NAME)
        if not os.path.exists(manifest_path):
            raise SnapshotError(f"no snapshot manifest in {self.directory}")
        try:
            with open(manifest_path, 'r', encoding='utf-8') as stream:
                manifest = json.load(stream)
        except json.JSONDecodeError as e:
            raise SnapshotIntegrityError('manifest', f"invalid JSON ({e.msg})") from e

        version = manifest.get('format_version')
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"snapshot format_version {version!r} is not supported (expected {FORMAT_VERSION})")

        try:
            hasher = LshHasher.from_config(manifest['hasher'])
            entries = manifest['shards']
        except (KeyError, TypeError) as e:
            raise SnapshotIntegrityError('manifest', f"missing field {e}") from e

        shards: Dict[str, IndexShard] = {}
        for entry in entries:
            try:
                category = entry['category']
                stem = entry['file_stem']
                num_docs = entry['num_docs']
            except (KeyError, TypeError) as e:
                raise SnapshotIntegrityError('manifest', f"malformed shard entry (missing {e})") from e
            forward = self._read_forward(stem, hasher.dim)
            if len(forward) != num_docs:
                raise SnapshotIntegrityError(f"{stem}.fwd", "document count differs from manifest")
            inverted = self._read_inverted(stem, len(forward))
            shards[category] = IndexShard(category, inverted, forward, hasher)

        self.logger.info(f"Loaded {len(shards)} shards from {self.directory}")
        return IndexShardSet(hasher, shards, version)

    def _read_file(self, name: str) -> bytes:
        path = self._path(name)
        if not os.path.exists(path):
            raise SnapshotIntegrityError(name, "file missing")
        with open(path, 'rb') as stream:
            return stream.read()

    def _check_header(self, reader: _ByteReader, magic: bytes, name: str):
        if reader.take(4) != magic:
            raise SnapshotIntegrityError(name, "bad magic")
        version = reader.u32()
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"{name} has format_version {version} (expected {FORMAT_VERSION})")

    def _read_forward(self, stem: str, dim: int) -> ForwardIndex:
        name = f"{stem}.fwd"
        reader = _ByteReader(self._read_file(name), f"{name}/header")
        self._check_header(reader, FORWARD_MAGIC, name)
        num_docs = reader.u32()
        stored_dim = reader.u32()
        if stored_dim != dim:
            raise SnapshotIntegrityError(f"{name}/header", f"dimension {stored_dim} != hasher dimension {dim}")

        ids_reader = _ByteReader(reader.section_payload(f"{name}/ids"), f"{name}/ids")
        ids = ids_reader.strings(num_docs)

        section = f"{name}/embeddings"
        block = reader.section_payload(section)
        if len(block) != num_docs * dim * 4:
            raise SnapshotIntegrityError(section, "block size does not match num_docs x dim")
        embeddings = np.frombuffer(block, dtype='<f4').astype(np.float32).reshape(num_docs, dim)

        section = f"{name}/attributes"
        lines = reader.section_payload(section).decode('utf-8').splitlines()
        if len(lines) != num_docs:
            raise SnapshotIntegrityError(section, "attribute count does not match num_docs")
        try:
            attributes = [json.loads(line) for line in lines]
        except json.JSONDecodeError as e:
            raise SnapshotIntegrityError(section, f"invalid JSON ({e.msg})") from e

        if not reader.at_end():
            raise SnapshotIntegrityError(name, "trailing bytes")
        return ForwardIndex(ids, embeddings, attributes)

    def _read_inverted(self, stem: str, num_docs: int) -> Dict[str, np.ndarray]:
        name = f"{stem}.inv"
        reader = _ByteReader(self._read_file(name), f"{name}/header")
        self._check_header(reader, INVERTED_MAGIC, name)
        num_keys = reader.u32()

        keys_section = f"{name}/keys"
        keys = _ByteReader(reader.section_payload(keys_section), keys_section).strings(num_keys)

        section = f"{name}/postings"
        postings_reader = _ByteReader(reader.section_payload(section), section)
        inverted = {}
        for key in keys:
            count = postings_reader.u32()
            deltas = np.frombuffer(postings_reader.take(4 * count), dtype='<u4').astype(np.int64)
            ordinals = np.cumsum(deltas)
            if count and (ordinals[-1] >= num_docs or np.any(deltas[1:] == 0)):
                raise SnapshotIntegrityError(section, f"postings for '{key}' are out of range or unsorted")
            ordinals.flags.writeable = False
            inverted[key] = ordinals
        if not postings_reader.at_end() or not reader.at_end():
            raise SnapshotIntegrityError(name, "trailing bytes")
        return inverted


def save_index(shard_set: IndexShardSet, directory: str):
    SnapshotHandler(directory).save(shard_set)


def load_index(directory: str) -> IndexShardSet:
    """
    Load a snapshot directory.

    Raises:
        UnsupportedVersionError: On an unknown format_version
        SnapshotIntegrityError: On truncation or a checksum mismatch, naming the section
    """
    return SnapshotHandler(directory).load()
