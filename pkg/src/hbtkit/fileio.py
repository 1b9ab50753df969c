"""On-disk formats.

Timestamp files (``.pstm``): little-endian binary, a 16-byte header
``b"PSTM"``, version u16, reserved u16, duration in ps u64, then one u64
arrival time in ps per event in non-decreasing order.

Histograms, series and spectra are UTF-8 CSV preceded by ``# key=value``
metadata lines.  Reports and configs are JSON with a ``schema_version``.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .correlate import CorrelationHistogram, HistogramMeta, Stage
from .errors import FileFormatError
from .fitting import Series, Spectrum
from .simulate import TimestampStream

MAGIC = b"PSTM"
FORMAT_VERSION = 1
SCHEMA_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- timestamps

def write_timestamps(path, stream: TimestampStream):
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 0, stream.duration_ps))
        f.write(stream.timestamps.astype("<u8").tobytes())


def read_timestamps(path, channel=None):
    """Read a ``.pstm`` file; ``channel`` defaults to the file stem."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, _, duration = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported format version {version}")
    body = raw[_HEADER.size:]
    if len(body) % 8:
        raise FileFormatError(f"{path}: body is not a whole number of u64 records",
                              record=len(body) // 8)
    ts = np.frombuffer(body, dtype="<u8")
    if ts.size and int(ts.max()) > duration:
        raise FileFormatError(f"{path}: timestamp beyond duration",
                              record=int(np.argmax(ts > duration)))
    bad = np.flatnonzero(np.diff(ts.astype(np.int64)) < 0)
    if bad.size:
        raise FileFormatError(f"{path}: timestamps out of order", record=int(bad[0]) + 1)
    return TimestampStream(ts.astype(np.int64), int(duration),
                           channel if channel is not None else path.stem)


def write_timestamps_csv(path, stream: TimestampStream):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# duration_ps={stream.duration_ps}\n# channel={stream.channel}\nt_ps\n")
        np.savetxt(f, stream.timestamps, fmt="%d")


def read_timestamps_csv(path):
    meta, rows = _read_csv(path)
    if "duration_ps" not in meta:
        raise FileFormatError(f"{path}: missing duration_ps")
    ts = np.array([int(r[0]) for r in rows], dtype=np.int64)
    bad = np.flatnonzero(np.diff(ts) < 0)
    if bad.size:
        raise FileFormatError(f"{path}: timestamps out of order", record=int(bad[0]) + 1)
    return TimestampStream(ts, int(meta["duration_ps"]), meta.get("channel", Path(path).stem))


# ---------------------------------------------------------------- csv helpers

def _read_csv(path):
    meta = {}
    rows = []
    header = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(header):
                raise FileFormatError(f"{path}: expected {len(header)} columns on line {lineno}",
                                      record=len(rows))
            rows.append(cells)
    meta["_columns"] = header or []
    return meta, rows


def _f(v):
    return "None" if v is None else repr(float(v))


def _opt_float(s):
    return None if s in (None, "", "None") else float(s)


def _write_meta(f, meta):
    for k, v in meta.items():
        f.write(f"# {k}={v}\n")


# ---------------------------------------------------------------- histograms

def write_histogram(path, h: CorrelationHistogram):
    m = h.meta
    buf = io.StringIO()
    _write_meta(buf, {
        "format": "hbtkit-histogram", "version": FORMAT_VERSION, "stage": h.stage.value,
        "N1": _f(m.n1), "N2": _f(m.n2), "T": _f(m.T), "w": _f(m.w), "rho": _f(m.rho),
    })
    buf.write("tau_ns,counts,g2,sigma\n")
    for row in zip(h.bin_centers, h.counts, h.values, h.sigma):
        buf.write(f"{_f(row[0])},{int(row[1])},{_f(row[2])},{_f(row[3])}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_histogram(path):
    meta, rows = _read_csv(path)
    if meta.get("format") != "hbtkit-histogram":
        raise FileFormatError(f"{path}: not a histogram file")
    if meta["_columns"] != ["tau_ns", "counts", "g2", "sigma"]:
        raise FileFormatError(f"{path}: unexpected columns {meta['_columns']}")
    try:
        tau, counts, g2, sigma = (list(c) for c in zip(*rows)) if rows else ([], [], [], [])
        hm = HistogramMeta(n1=_opt_float(meta.get("N1")), n2=_opt_float(meta.get("N2")),
                           T=_opt_float(meta.get("T")), w=_opt_float(meta.get("w")),
                           rho=_opt_float(meta.get("rho")))
        return CorrelationHistogram(
            np.array(tau, dtype=float), np.array([int(c) for c in counts], dtype=np.int64),
            np.array(g2, dtype=float), np.array(sigma, dtype=float),
            Stage(meta.get("stage", "raw")), hm,
        )
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- series

def write_series(path, s: Series, **extra):
    buf = io.StringIO()
    _write_meta(buf, {"format": "hbtkit-series", "version": FORMAT_VERSION, "kind": s.kind, **extra})
    buf.write("x,y,sigma\n")
    for row in zip(s.x, s.y, s.sigma):
        buf.write(f"{_f(row[0])},{_f(row[1])},{_f(row[2])}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_series(path):
    meta, rows = _read_csv(path)
    if meta.get("format") != "hbtkit-series":
        raise FileFormatError(f"{path}: not a series file")
    if meta["_columns"] != ["x", "y", "sigma"]:
        raise FileFormatError(f"{path}: unexpected columns {meta['_columns']}")
    try:
        arr = np.array(rows, dtype=float).reshape(-1, 3)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return Series(arr[:, 0], arr[:, 1], arr[:, 2], kind=meta.get("kind", "series"))


def write_spectrum(path, s: Spectrum):
    sigma = s.sigma if s.sigma is not None else np.ones_like(s.intensities)
    extra = {} if s.baseline is None else {"baseline": _f(s.baseline)}
    write_series(path, Series(s.wavelengths, s.intensities, sigma, kind="spectrum"), **extra)


def read_spectrum(path):
    meta, _ = _read_csv(path)
    ser = read_series(path)
    if ser.kind != "spectrum":
        raise FileFormatError(f"{path}: series kind is {ser.kind!r}, not 'spectrum'")
    return Spectrum(ser.x, ser.y, ser.sigma, baseline=_opt_float(meta.get("baseline")))


# ---------------------------------------------------------------- json

def write_json(path, doc):
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
