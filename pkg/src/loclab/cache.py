"""On-disk cache entries: a plain-text header followed by raw little-endian float64 data.

Layout of one entry file::

    loclab-cache 1
    kind = spectrum
    config_hash = 3f2a...
    endian = little
    dtype = float64
    array levels 1 412
    array tensions 1 412
    meta = {"lambda": 0.15, ...}
    payload_sha256 = 9c1e...
    end
    <payload bytes: each array in header order, C order>

Writes go to a temporary file in the same directory and are renamed into
place, so readers never observe a half-written entry.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = "loclab-cache 1"
KINDS = ("chaos_grid", "rho", "transport", "spectrum", "husimi_set", "separation", "measures", "fit")
_LE = np.dtype("<f8")


class CacheError(Exception):
    pass


class CacheCorrupt(CacheError):
    pass


def config_hash(subset) -> str:
    """Stable short hash of a JSON-serializable config subset."""
    text = json.dumps(subset, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()[:20]


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serializable: {type(x)}")


@dataclass
class CacheEntry:
    kind: str
    config_hash: str
    arrays: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cache kind {self.kind!r}")


def _chunks(entry):
    """Payload pieces in header order, as little-endian float64 buffers (no copy when already so)."""
    for a in entry.arrays.values():
        yield memoryview(np.ascontiguousarray(a, dtype=_LE)).cast("B")


def _header(entry, digest) -> bytes:
    lines = [MAGIC, f"kind = {entry.kind}", f"config_hash = {entry.config_hash}",
             "endian = little", "dtype = float64"]
    for name, a in entry.arrays.items():
        if not name.isidentifier():
            raise ValueError(f"array name {name!r} must be an identifier")
        shape = np.shape(a)
        lines.append(f"array {name} {len(shape)} " + " ".join(str(d) for d in shape))
    lines.append("meta = " + json.dumps(entry.meta, sort_keys=True, default=_jsonable))
    lines.append("payload_sha256 = " + digest)
    lines.append("end")
    return ("\n".join(lines) + "\n").encode()


def _digest(entry) -> str:
    h = hashlib.sha256()
    for c in _chunks(entry):
        h.update(c)
    return h.hexdigest()


def encode(entry: CacheEntry) -> bytes:
    return _header(entry, _digest(entry)) + b"".join(bytes(c) for c in _chunks(entry))


def decode(data) -> CacheEntry:
    """Parse an entry; arrays are read-only views into ``data``."""
    cut = data.find(b"\nend\n")
    if cut < 0:
        raise CacheCorrupt("header terminator missing")
    lines = bytes(data[:cut]).decode().split("\n")
    body = memoryview(data)[cut + 5:]
    if lines[0] != MAGIC:
        raise CacheCorrupt(f"bad magic {lines[0]!r}")
    fields, shapes = {}, []
    for line in lines[1:]:
        if line.startswith("array "):
            parts = line.split()
            ndim = int(parts[2])
            shapes.append((parts[1], tuple(int(d) for d in parts[3:3 + ndim])))
        else:
            key, _, value = line.partition(" = ")
            fields[key] = value
    if fields.get("endian") != "little" or fields.get("dtype") != "float64":
        raise CacheCorrupt("unsupported payload encoding")
    if hashlib.sha256(body).hexdigest() != fields.get("payload_sha256"):
        raise CacheCorrupt("payload hash mismatch")
    arrays, pos = {}, 0
    for name, shape in shapes:
        n = int(np.prod(shape, dtype=np.int64))
        if pos + 8 * n > len(body):
            raise CacheCorrupt(f"payload too short for array {name}")
        arrays[name] = np.frombuffer(body[pos:pos + 8 * n], dtype=_LE).reshape(shape)
        pos += 8 * n
    if pos != len(body):
        raise CacheCorrupt("trailing payload bytes")
    return CacheEntry(kind=fields["kind"], config_hash=fields["config_hash"], arrays=arrays,
                      meta=json.loads(fields.get("meta", "{}")))


class Cache:
    """A directory of entries addressed by (kind, label, config hash)."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, kind, label, chash):
        return self.root / f"{kind}--{label}--{chash}.lcache"

    def exists(self, kind, label, chash):
        return self.path(kind, label, chash).is_file()

    def load(self, kind, label, chash) -> CacheEntry:
        p = self.path(kind, label, chash)
        if not p.is_file():
            raise FileNotFoundError(p)
        entry = decode(p.read_bytes())
        if entry.kind != kind or entry.config_hash != chash:
            raise CacheCorrupt(f"{p.name}: header does not match its address")
        return entry

    def store(self, entry: CacheEntry, label) -> Path:
        p = self.path(entry.kind, label, entry.config_hash)
        header = _header(entry, _digest(entry))
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(header)
                for chunk in _chunks(entry):
                    fh.write(chunk)
            os.chmod(tmp, 0o644)
            os.replace(tmp, p)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.prune(entry.kind, label, keep=entry.config_hash)
        return p

    def prune(self, kind, label, keep):
        """Drop entries for the same item left behind by an older configuration."""
        for p in self.root.glob(f"{kind}--{label}--*.lcache"):
            if not p.name.endswith(f"--{keep}.lcache"):
                p.unlink()
