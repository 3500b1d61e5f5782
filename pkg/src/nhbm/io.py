"""Persistence: atomic writes, trajectory datasets, manifests, CSV tables."""
import csv
import hashlib
import io as _io
import json
import os
import tempfile

import numpy as np

from .frame import frame_to_dict


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(value):
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    return value


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True)


def write_json(path, obj):
    atomic_write_text(path, json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def trajectory_lines(records):
    """One JSON line per (trajectory, stored time)."""
    for rec in records:
        for step, frame in enumerate(rec.frames):
            row = {"traj": rec.traj_index, "index": step}
            row.update(frame_to_dict(frame))
            yield dumps(row)


def write_dataset(path, records):
    atomic_write_text(path, "".join(line + "\n" for line in trajectory_lines(records)))


def read_dataset(path):
    """Parse a JSON-lines trajectory dataset.

    Returns a list of dicts with numpy ``lambda`` and ``overlap`` arrays.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            d["lambda"] = np.array([complex(*p) for p in d["lambda"]])
            d["overlap"] = np.array([[complex(*p) for p in row] for row in d["overlap"]])
            rows.append(d)
    return rows


def table_text(rows, columns, fmt="csv"):
    """Render row dicts as CSV (17 significant digits) or a JSON array."""
    if fmt == "json":
        return json.dumps([{c: _clean(r[c]) for c in columns} for r in rows], indent=1) + "\n"
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        out = []
        for c in columns:
            v = r[c]
            if isinstance(v, (bool, np.bool_)):
                out.append(int(v))
            elif isinstance(v, (float, np.floating)):
                out.append(f"{float(v):.17g}")
            else:
                out.append(v)
        writer.writerow(out)
    return buf.getvalue()


def write_table(path, rows, columns, fmt="csv"):
    atomic_write_text(path, table_text(rows, columns, fmt))


def read_csv(path):
    """Read a numeric CSV into a dict of float arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [list(map(float, row)) for row in reader if row]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
