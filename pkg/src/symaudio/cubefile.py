"""Binary container for labelled feature cube collections.

Layout, all integers little-endian u32: magic "MTSD1", counts (instances m,
attributes n, series length T), n length-prefixed UTF-8 attribute names, the
class vocabulary (count then length-prefixed names), then per instance a
label id followed by n*T float64 values in attribute-major order, and a
trailing CRC32 of every preceding byte.
"""
from __future__ import annotations

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"MTSD1"


class CubeFileError(ValueError):
    pass


@dataclass
class CubeFile:
    attr_names: tuple
    classes: tuple
    values: np.ndarray    # (m, n_attrs, T) float64
    labels: list          # class ids, one per instance


def _pack_str(s):
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def write_cube_file(path, attr_names, classes, values, labels):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ValueError("values must have shape (instances, attrs, T)")
    m, n, T = values.shape
    attr_names = tuple(attr_names)
    classes = tuple(classes)
    labels = [int(l) for l in labels]
    if len(attr_names) != n:
        raise ValueError("attribute name count does not match values")
    if len(labels) != m:
        raise ValueError("label count does not match values")
    if len(set(attr_names)) != n:
        raise ValueError("attribute names must be unique")
    for l in labels:
        if not 0 <= l < len(classes):
            raise ValueError(f"label id {l} outside the class vocabulary")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")

    parts = [MAGIC, struct.pack("<III", m, n, T)]
    parts.extend(_pack_str(name) for name in attr_names)
    parts.append(struct.pack("<I", len(classes)))
    parts.extend(_pack_str(c) for c in classes)
    for i in range(m):
        parts.append(struct.pack("<I", labels[i]))
        parts.append(np.ascontiguousarray(values[i], dtype="<f8").tobytes())
    body = b"".join(parts)
    data = body + struct.pack("<I", zlib.crc32(body))

    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CubeFileError("cube file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def string(self):
        return self.take(self.u32()).decode("utf-8")


def load_cube_file(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 4 or not data.startswith(MAGIC):
        raise CubeFileError(f"{path} is not a cube file")
    stored = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored:
        raise CubeFileError(f"{path} failed its checksum, file is corrupt")
    cur = _Cursor(data[:-4])
    cur.take(len(MAGIC))
    m, n, T = cur.u32(), cur.u32(), cur.u32()
    attr_names = tuple(cur.string() for _ in range(n))
    n_classes = cur.u32()
    classes = tuple(cur.string() for _ in range(n_classes))
    values = np.empty((m, n, T), dtype=np.float64)
    labels = []
    for i in range(m):
        lab = cur.u32()
        if lab >= n_classes:
            raise CubeFileError(f"label id {lab} outside the class vocabulary")
        labels.append(lab)
        raw = cur.take(8 * n * T)
        values[i] = np.frombuffer(raw, dtype="<f8").reshape(n, T)
    if cur.pos != len(cur.data):
        raise CubeFileError("cube file has trailing bytes")
    if len(set(attr_names)) != n:
        raise CubeFileError("attribute names are not unique")
    if not np.all(np.isfinite(values)):
        raise CubeFileError("cube file holds non-finite values")
    return CubeFile(attr_names=attr_names, classes=classes, values=values,
                    labels=labels)
