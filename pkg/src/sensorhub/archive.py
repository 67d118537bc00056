"""Portable archive container (format v1).

Framing, bit-exact:

    magic "SKAR" | u32 member count | per member:
        u16 name length | name (UTF-8) | u64 byte length | bytes

All integers little-endian. Member order is deterministic: manifest.json
first, then series/<id>.blk sorted by id, aggregates/<name>.json sorted,
annotations.json, optional audit.ael, optional acl.json, and finally
manifest.sha256 (hex digest of the manifest member, so a flipped byte in
the manifest itself is caught: the manifest lists every other member's
SHA-256 but cannot checksum itself).

Verification is strict: exact byte consumption, exact member-name match
against the manifest, every checksum recomputed. Any single corrupted
byte fails verification before an import mutates anything.
"""

from __future__ import annotations

import hashlib
import json
import struct

from .errors import ChecksumMismatch, UnsupportedVersion, ValidationError

ARCHIVE_MAGIC = b"SKAR"
FORMAT_VERSION = 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

MANIFEST_NAME = "manifest.json"
MANIFEST_DIGEST_NAME = "manifest.sha256"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _member_sort_key(name: str) -> tuple:
    order = {
        "series/": 1,
        "aggregates/": 2,
        "annotations.json": 3,
        "audit.ael": 4,
        "acl.json": 5,
    }
    for prefix, rank in order.items():
        if name.startswith(prefix):
            return (rank, name)
    raise ValidationError(f"unplaceable archive member {name!r}")


def build_archive(manifest: dict, members: dict[str, bytes]) -> bytes:
    """Serialize an archive; fills the manifest's checksum table."""
    ordered = sorted(members, key=_member_sort_key)
    manifest = dict(manifest)
    manifest["format_version"] = FORMAT_VERSION
    manifest["checksums"] = {name: _sha256(members[name]) for name in ordered}
    manifest_bytes = json.dumps(manifest, sort_keys=True, indent=1).encode()
    digest_bytes = (_sha256(manifest_bytes) + "\n").encode()

    sequence = [(MANIFEST_NAME, manifest_bytes)]
    sequence += [(name, members[name]) for name in ordered]
    sequence.append((MANIFEST_DIGEST_NAME, digest_bytes))

    out = bytearray()
    out += ARCHIVE_MAGIC
    out += _U32.pack(len(sequence))
    for name, data in sequence:
        encoded = name.encode()
        out += _U16.pack(len(encoded))
        out += encoded
        out += _U64.pack(len(data))
        out += data
    return bytes(out)


def parse_archive(data: bytes) -> tuple[dict, dict[str, bytes]]:
    """Strictly parse + verify an archive; returns (manifest, members).

    Raises ChecksumMismatch on any integrity violation and
    UnsupportedVersion on unknown format versions. Never mutates state.
    """
    view = memoryview(data)
    if len(data) < len(ARCHIVE_MAGIC) + _U32.size or bytes(view[:4]) != ARCHIVE_MAGIC:
        raise ChecksumMismatch("not an archive: bad magic")
    (count,) = _U32.unpack_from(data, 4)
    off = 4 + _U32.size
    raw_members: list[tuple[str, bytes]] = []
    for _ in range(count):
        if off + _U16.size > len(data):
            raise ChecksumMismatch("truncated member table")
        (name_len,) = _U16.unpack_from(data, off)
        off += _U16.size
        if off + name_len + _U64.size > len(data):
            raise ChecksumMismatch("truncated member name")
        try:
            name = bytes(view[off : off + name_len]).decode()
        except UnicodeDecodeError:
            raise ChecksumMismatch("undecodable member name")
        off += name_len
        (length,) = _U64.unpack_from(data, off)
        off += _U64.size
        if off + length > len(data):
            raise ChecksumMismatch(f"member {name!r} exceeds archive size")
        raw_members.append((name, bytes(view[off : off + length])))
        off += length
    if off != len(data):
        raise ChecksumMismatch("trailing bytes after final member")

    names = [n for n, _ in raw_members]
    if len(set(names)) != len(names):
        raise ChecksumMismatch("duplicate member names")
    members = dict(raw_members)
    if MANIFEST_NAME not in members or MANIFEST_DIGEST_NAME not in members:
        raise ChecksumMismatch("manifest members missing")

    manifest_bytes = members.pop(MANIFEST_NAME)
    digest_text = members.pop(MANIFEST_DIGEST_NAME).decode(errors="replace").strip()
    if _sha256(manifest_bytes) != digest_text:
        raise ChecksumMismatch("manifest digest mismatch")
    try:
        manifest = json.loads(manifest_bytes)
    except json.JSONDecodeError:
        raise ChecksumMismatch("manifest is not valid JSON")

    if manifest.get("format_version") != FORMAT_VERSION:
        raise UnsupportedVersion(
            f"archive format {manifest.get('format_version')!r} not supported"
        )
    checksums = manifest.get("checksums", {})
    if set(checksums) != set(members):
        raise ChecksumMismatch("member set differs from manifest listing")
    for name, body in members.items():
        if _sha256(body) != checksums[name]:
            raise ChecksumMismatch(f"checksum mismatch on {name!r}")
    return manifest, members
