"""Dataset, ground-truth, and config file formats used by the CLI.

Binary datasets use the ANNB v1 layout: a fixed little-endian header
(magic "ANNB", u8 version, u8 dtype, u16 reserved, u32 n, u32 d) followed
by the row-major payload. dtype 0 stores float32 rows; dtype 1 stores
bit rows packed MSB-first into ceil(d/8) bytes per row. Text datasets
carry a "n d metric" header line followed by whitespace-separated rows.
Ground truth is a CSV with columns query_id,point_id,distance.
"""

import struct
from pathlib import Path

import numpy as np

from .. import core
from ..errors import DataError

ANNB_MAGIC = b"ANNB"
ANNB_VERSION = 1
DTYPE_F32 = 0
DTYPE_BITS = 1

_HEADER = struct.Struct("<4sBBHII")

GT_COLUMNS = ("query_id", "point_id", "distance")


def metric_from_name(name: str) -> core.Metric:
    """Parse a metric token: hamming, l1, l2, linf, lp:<p>, or topk:<k>."""
    name = name.strip().lower()
    if name == "hamming":
        return core.HAMMING
    if name == "l1":
        return core.L1
    if name == "l2":
        return core.L2
    if name == "linf":
        return core.LINF
    if name.startswith("lp:"):
        return core.lp(float(name[3:]))
    if name.startswith("topk:"):
        return core.topk(int(name[5:]))
    raise DataError(f"unknown metric name {name!r}")


def metric_name(metric: core.Metric) -> str:
    if metric.kind == "lp":
        return f"lp:{format(metric.p, '.12g')}"
    if metric.kind == "topk":
        return f"topk:{metric.k}"
    if metric.kind == "orlicz":
        raise DataError("orlicz metrics have no file representation")
    return metric.kind


def write_annb(path, dataset: core.Dataset) -> None:
    path = Path(path)
    n, d = dataset.n, dataset.dim
    if dataset.metric.binary:
        bits = core.unpack_bits(dataset.points, d).astype(np.uint8)
        payload = np.packbits(bits, axis=1).tobytes()
        dtype = DTYPE_BITS
    else:
        payload = np.ascontiguousarray(dataset.points, dtype=np.float32).tobytes()
        dtype = DTYPE_F32
    header = _HEADER.pack(ANNB_MAGIC, ANNB_VERSION, dtype, 0, n, d)
    path.write_bytes(header + payload)


def read_annb(path, metric: core.Metric = None) -> core.Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, dtype, reserved, n, d = _HEADER.unpack_from(raw)
    if magic != ANNB_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != ANNB_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise DataError(f"{path}: nonzero reserved field")
    body = raw[_HEADER.size:]
    if dtype == DTYPE_BITS:
        if metric is not None and not metric.binary:
            raise DataError("bit-packed file cannot carry a dense metric")
        row_bytes = (d + 7) // 8
        if len(body) != n * row_bytes:
            raise DataError(f"{path}: payload size mismatch")
        rows = np.frombuffer(body, dtype=np.uint8).reshape(n, row_bytes)
        bits = np.unpackbits(rows, axis=1)[:, :d]
        return core.bit_dataset(core.pack_bits(bits), d)
    if dtype == DTYPE_F32:
        if metric is not None and metric.binary:
            raise DataError("float file cannot carry the hamming metric")
        if len(body) != n * d * 4:
            raise DataError(f"{path}: payload size mismatch")
        pts = np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)
        return core.dense_dataset(pts, metric if metric is not None else core.L2)
    raise DataError(f"{path}: unknown dtype {dtype}")


def write_text(path, dataset: core.Dataset) -> None:
    path = Path(path)
    n, d = dataset.n, dataset.dim
    lines = [f"{n} {d} {metric_name(dataset.metric)}"]
    if dataset.metric.binary:
        bits = core.unpack_bits(dataset.points, d)
        for row in bits:
            lines.append(" ".join(str(int(v)) for v in row))
    else:
        for row in dataset.points:
            lines.append(" ".join(format(float(v), ".9g") for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_text(path) -> core.Dataset:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 3:
        raise DataError(f"{path}: header must be 'n d metric'")
    try:
        n, d = int(head[0]), int(head[1])
    except ValueError as exc:
        raise DataError(f"{path}: bad header counts") from exc
    metric = metric_from_name(head[2])
    tokens = " ".join(lines[1:]).split()
    if len(tokens) != n * d:
        raise DataError(f"{path}: expected {n * d} values, found {len(tokens)}")
    if metric.binary:
        bits = np.array([int(t) for t in tokens], dtype=np.uint8).reshape(n, d)
        if not np.all((bits == 0) | (bits == 1)):
            raise DataError(f"{path}: hamming rows must be 0/1")
        return core.bit_dataset(core.pack_bits(bits), d)
    vals = np.array([float(t) for t in tokens], dtype=np.float64).reshape(n, d)
    return core.dense_dataset(vals, metric)


def write_dataset(path, dataset: core.Dataset, fmt: str = "annb") -> None:
    if fmt == "annb":
        write_annb(path, dataset)
    elif fmt == "text":
        write_text(path, dataset)
    else:
        raise DataError(f"unknown dataset format {fmt!r}")


def read_dataset(path, metric: core.Metric = None) -> core.Dataset:
    """Sniff the on-disk format by the magic bytes and dispatch."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == ANNB_MAGIC:
        return read_annb(path, metric)
    ds = read_text(path)
    if metric is not None and metric.kind != ds.metric.kind:
        raise DataError(f"{path}: file metric {ds.metric.kind} != requested {metric.kind}")
    return ds


def write_ground_truth(path, rows) -> None:
    lines = [",".join(GT_COLUMNS)]
    for qid, pid, dist in rows:
        lines.append(f"{int(qid)},{int(pid)},{format(float(dist), '.12g')}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ground_truth(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",") != list(GT_COLUMNS):
        raise DataError(f"{path}: missing query_id,point_id,distance header")
    rows = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != 3:
            raise DataError(f"{path}: malformed row {ln!r}")
        rows.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return rows


def read_config(path) -> dict:
    """Plain key=value lines; blank lines and # comments are skipped."""
    out = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise DataError(f"{path}: expected key=value, got {ln!r}")
        key, val = ln.split("=", 1)
        out[key.strip()] = val.strip()
    return out
