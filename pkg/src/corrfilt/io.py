"""Filter container, config digests and tab-separated reports."""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .solvers import SpectralFilter

MAGIC = b"CFLT"
VERSION = 1
# magic, version, K, W, H, method (8 bytes), digest (16 hex chars), metadata length
_HEADER = struct.Struct("<4sHIII8s16sI")


class FilterFormatError(ValueError):
    pass


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_filter(filt: SpectralFilter, path, digest: str = "0" * 16) -> None:
    """Header then K*H*W complex coefficients as little-endian float64 (re, im) pairs, row-major."""
    K, H, W = filt.spectra.shape
    meta = json.dumps({"feature": filt.feature, "cell_size": filt.cell_size,
                       "peak": list(filt.peak)}, sort_keys=True).encode()
    header = _HEADER.pack(MAGIC, VERSION, K, W, H, filt.method.encode()[:8].ljust(8, b"\0"),
                          digest.encode()[:16].ljust(16, b"0"), len(meta))
    payload = np.ascontiguousarray(filt.spectra, dtype="<c16").tobytes()
    Path(path).write_bytes(header + meta + payload)


def read_header(blob: bytes) -> dict:
    if len(blob) < _HEADER.size:
        raise FilterFormatError("file too short for a filter header")
    magic, version, K, W, H, method, digest, meta_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FilterFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FilterFormatError(f"unsupported version {version}")
    return dict(K=K, W=W, H=H, method=method.rstrip(b"\0").decode(), digest=digest.decode(),
                meta_len=meta_len)


def load_filter(path) -> tuple[SpectralFilter, dict]:
    blob = Path(path).read_bytes()
    hdr = read_header(blob)
    start = _HEADER.size
    meta = json.loads(blob[start:start + hdr["meta_len"]])
    payload = blob[start + hdr["meta_len"]:]
    n = hdr["K"] * hdr["H"] * hdr["W"]
    if len(payload) != 16 * n:
        raise FilterFormatError(f"payload holds {len(payload)} bytes, expected {16 * n}")
    spectra = np.frombuffer(payload, dtype="<c16").reshape(hdr["K"], hdr["H"], hdr["W"]).astype(np.complex128)
    filt = SpectralFilter(spectra, hdr["method"], meta["feature"], int(meta["cell_size"]),
                          tuple(meta["peak"]))
    return filt, hdr


def payload_bytes(path) -> bytes:
    blob = Path(path).read_bytes()
    hdr = read_header(blob)
    return blob[_HEADER.size + hdr["meta_len"]:]


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_tsv(path, header: list, rows: list) -> None:
    lines = ["\t".join(header)]
    lines += ["\t".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tsv(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:] if line]
