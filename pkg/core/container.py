## core/container.py

"""
Versioned binary container shared by checkpoints, scenes, cell databases and
retrieval indexes.

    magic (4 bytes) | version (uint32 LE) | header length (uint64 LE)
    | header (UTF-8 JSON, sorted keys) | array payloads (little endian)

The header lists every array with dtype, shape, offset and byte count. No
timestamps are written, so a fixed input yields identical bytes.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from core.errors import MissingArtifactError, TextLocError

log = logging.getLogger(__name__)

MAGIC = b"TLCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_DTYPES = {"float64": "<f8", "int64": "<i8"}


def write_container(
    path: Union[str, Path],
    kind: str,
    meta: Mapping[str, Any],
    arrays: Mapping[str, np.ndarray],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    blobs = []
    offset = 0
    for name, array in arrays.items():
        array = np.asarray(array)
        dtype = "int64" if np.issubdtype(array.dtype, np.integer) or array.dtype == np.bool_ else "float64"
        blob = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes()
        entries.append({
            "name": name,
            "dtype": dtype,
            "shape": list(array.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)

    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)

    log.debug(f"[ CONTAINER ] Wrote {kind}: {path} ({len(entries)} arrays)")
    return path


def read_container(
    path: Union[str, Path],
    kind: str,
) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path)

    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise TextLocError(f"truncated container: {path}")
    magic, version, header_len = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise TextLocError(f"not a container file: {path}")
    if version != VERSION:
        raise TextLocError(f"unsupported container version {version}: {path}")

    start = _PREFIX.size
    header = json.loads(raw[start:start + header_len].decode("utf-8"))
    if header["kind"] != kind:
        raise TextLocError(f"expected a '{kind}' container, found '{header['kind']}': {path}")

    payload = memoryview(raw)[start + header_len:]
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        chunk = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        array = np.frombuffer(chunk, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        arrays[entry["name"]] = array.astype(entry["dtype"])
    return header["meta"], arrays
