"""Parameter checkpoint files.

Layout::

    b"CADPARAM\\n"                  magic line
    <ascii integer>\\n              byte length of the header
    <json header>                   {"arrays": [{"name": str, "shape": [int, ...]}, ...], "meta": {...}}
    <payload>                       each array in header order, C order, little-endian float64

The format round-trips bit-exactly.
"""

import json
from pathlib import Path

import numpy as np

from cadport.errors import ParseError
from cadport.nn.network import ParamSet

MAGIC = b"CADPARAM\n"


def save_params(params, path, meta=None):
    header = {
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("ascii")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{len(blob)}\n".encode("ascii"))
        fh.write(blob)
        for v in params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_params(path, with_meta=False):
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ParseError(f"{path}: not a parameter checkpoint")
    pos = len(MAGIC)
    nl = data.index(b"\n", pos)
    size = int(data[pos:nl])
    header = json.loads(data[nl + 1: nl + 1 + size])
    pos = nl + 1 + size
    params = ParamSet()
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if pos + nbytes > len(data):
            raise ParseError(f"{path}: truncated payload for {entry['name']}")
        params[entry["name"]] = np.frombuffer(data[pos: pos + nbytes], dtype="<f8").astype(np.float64).reshape(shape)
        pos += nbytes
    if pos != len(data):
        raise ParseError(f"{path}: {len(data) - pos} trailing bytes")
    return (params, header.get("meta", {})) if with_meta else params
