"""Minimal PLY reader/writer for point clouds (ascii and binary_little_endian).

Only the ``vertex`` element matters: its ``x``/``y``/``z`` properties become
positions and an optional scalar ``label`` property becomes per-point labels.
Other scalar elements are skipped; list properties are only tolerated after
the vertex block.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .errors import PlyError

_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_header(data: bytes):
    if not data.startswith(b"ply"):
        raise PlyError("missing 'ply' magic at byte 0")
    end = data.find(b"end_header")
    if end < 0:
        raise PlyError("no end_header line")
    nl = data.find(b"\n", end)
    body_offset = len(data) if nl < 0 else nl + 1
    fmt = None
    elements = []  # [name, count, [(prop, dtype | None for list)]]
    offset = 0
    for lineno, raw in enumerate(data[:end].split(b"\n"), start=1):
        line = raw.decode("ascii", errors="replace").strip()
        words = line.split()
        if not words or words[0] in ("ply", "comment", "obj_info"):
            offset += len(raw) + 1
            continue
        where = f"header line {lineno} (byte {offset})"
        if words[0] == "format":
            if len(words) < 2 or words[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"unsupported format at {where}: {line!r}")
            fmt = words[1]
        elif words[0] == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise PlyError(f"bad element declaration at {where}: {line!r}")
            elements.append([words[1], int(words[2]), []])
        elif words[0] == "property":
            if not elements:
                raise PlyError(f"property before any element at {where}")
            if len(words) == 5 and words[1] == "list":
                elements[-1][2].append((words[4], None))
            elif len(words) == 3 and words[1] in _TYPES:
                elements[-1][2].append((words[2], _TYPES[words[1]]))
            else:
                raise PlyError(f"bad property at {where}: {line!r}")
        else:
            raise PlyError(f"unexpected keyword at {where}: {line!r}")
        offset += len(raw) + 1
    if fmt is None:
        raise PlyError("header has no format line")
    return fmt, elements, body_offset


def read_ply(data: bytes) -> PointCloud:
    fmt, elements, body = _parse_header(data)
    vertex_pos = next((i for i, e in enumerate(elements) if e[0] == "vertex"), None)
    if vertex_pos is None:
        raise PlyError("no vertex element")
    _, count, props = elements[vertex_pos]
    names = [p[0] for p in props]
    for axis in "xyz":
        if axis not in names:
            raise PlyError(f"vertex element lacks property {axis!r}")
    for name, dt in props:
        if dt is None:
            raise PlyError(f"list property {name!r} on vertex element is unsupported")
    label_dt = dict(props).get("label")
    if label_dt is not None and label_dt[0] == "f":
        raise PlyError("label property must be an integer type")

    if fmt == "ascii":
        table, where = _read_ascii(data, body, elements, vertex_pos)
    else:
        table, where = _read_binary(data, body, elements, vertex_pos)

    xyz = np.stack([table[a].astype(np.float64) for a in "xyz"], axis=1)
    bad = ~np.isfinite(xyz).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PlyError(f"non-finite coordinate at vertex {i + 1} ({where(i)})")
    labels = table["label"].astype(np.int64) if label_dt is not None else None
    return PointCloud(xyz, labels)


def _skip_lines(lines, start, n, what):
    if start + n > len(lines):
        raise PlyError(f"{what}: expected {n} lines, body ends early")
    return start + n


def _read_ascii(data, body, elements, vertex_pos):
    lines = data[body:].split(b"\n")
    header_lines = data[:body].count(b"\n")
    cursor = 0
    for name, n, _ in elements[:vertex_pos]:
        cursor = _skip_lines(lines, cursor, n, f"element {name!r}")
    _, count, props = elements[vertex_pos]
    out = {p: np.empty(count, dtype=dt) for p, dt in props}
    for i in range(count):
        lineno = header_lines + cursor + i + 1
        if cursor + i >= len(lines) or not lines[cursor + i].strip():
            raise PlyError(f"vertex {i + 1} missing (line {lineno}): header "
                           f"declares {count} vertices")
        fields = lines[cursor + i].split()
        if len(fields) < len(props):
            raise PlyError(f"vertex {i + 1} has {len(fields)} fields, "
                           f"expected {len(props)} (line {lineno})")
        for (p, dt), tok in zip(props, fields):
            try:
                out[p][i] = float(tok) if dt[0] == "f" else int(tok)
            except (ValueError, OverflowError):
                raise PlyError(f"bad value {tok!r} for {p} at vertex {i + 1} "
                               f"(line {lineno})") from None
    first = header_lines + cursor + 1
    return out, lambda i: f"line {first + i}"


def _read_binary(data, body, elements, vertex_pos):
    offset = body
    for name, n, props in elements[:vertex_pos]:
        if any(dt is None for _, dt in props):
            raise PlyError(f"list property in element {name!r} before vertices "
                           "is unsupported")
        offset += n * np.dtype([(p, "<" + dt) for p, dt in props]).itemsize
    _, count, props = elements[vertex_pos]
    dtype = np.dtype([(p, "<" + dt) for p, dt in props])
    need = count * dtype.itemsize
    if offset + need > len(data):
        have = max(0, (len(data) - offset) // dtype.itemsize)
        raise PlyError(f"body ends at byte {len(data)}; vertex {have + 1} of "
                       f"{count} would start at byte {offset + have * dtype.itemsize}")
    table = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return table, lambda i: f"byte {offset + i * dtype.itemsize}"


def write_ply(cloud: PointCloud, format: str = "binary") -> bytes:
    """Serialize with double-precision coordinates and an int label column."""
    if format not in ("ascii", "binary"):
        raise ValueError(f"format must be 'ascii' or 'binary', got {format!r}")
    has_labels = cloud.labels is not None
    head = [
        "ply",
        "format " + ("ascii 1.0" if format == "ascii" else "binary_little_endian 1.0"),
        f"element vertex {cloud.count}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if has_labels:
        head.append("property int label")
    head.append("end_header")
    header = ("\n".join(head) + "\n").encode("ascii")

    if format == "binary":
        fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
        if has_labels:
            fields.append(("label", "<i4"))
        rec = np.empty(cloud.count, dtype=fields)
        for k, a in enumerate("xyz"):
            rec[a] = cloud.positions[:, k]
        if has_labels:
            rec["label"] = cloud.labels
        return header + rec.tobytes()

    rows = []
    for i, p in enumerate(cloud.positions):
        row = "%.17g %.17g %.17g" % (p[0], p[1], p[2])
        if has_labels:
            row += " %d" % cloud.labels[i]
        rows.append(row + "\n")
    return header + "".join(rows).encode("ascii")


def load(path) -> PointCloud:
    with open(path, "rb") as f:
        return read_ply(f.read())


def save(path, cloud: PointCloud, format: str = "binary"):
    with open(path, "wb") as f:
        f.write(write_ply(cloud, format))
