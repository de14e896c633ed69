"""
Đọc/ghi file trọng số

Định dạng: magic b"IWTS" | độ dài manifest (u64 little-endian) | manifest JSON
(name -> shape, dtype, offset, nbytes) | payload float little-endian nối tiếp.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from app.errors import ContractError
from app.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

MAGIC = b"IWTS"
_HEADER = struct.Struct("<4sQ")
_DTYPES = {"float64": "<f8", "float32": "<f4"}


def save_weights(path: Union[str, Path], tensors: Mapping[str, Tensor]) -> None:
    """Ghi các tensor theo thứ tự của mapping"""
    manifest: Dict[str, dict] = {}
    payloads = []
    offset = 0
    for name, tensor in tensors.items():
        dtype = tensor.dtype.name
        if dtype not in _DTYPES:
            raise ContractError(f"unsupported dtype {dtype} for '{name}'")
        raw = np.ascontiguousarray(tensor.data, dtype=_DTYPES[dtype]).tobytes()
        manifest[name] = {"shape": list(tensor.shape), "dtype": dtype,
                          "offset": offset, "nbytes": len(raw)}
        payloads.append(raw)
        offset += len(raw)

    header = json.dumps(manifest, sort_keys=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, len(header)))
        fh.write(header)
        for raw in payloads:
            fh.write(raw)
    logger.info("saved %d tensors (%d bytes) to %s", len(manifest), offset, path)


def load_weights(path: Union[str, Path]) -> Dict[str, Tensor]:
    """Đọc lại file do save_weights ghi, bit-exact"""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ContractError(f"{path}: truncated weight container")
    magic, header_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ContractError(f"{path}: not a weight container (magic {magic!r})")
    start = _HEADER.size
    if start + header_len > len(blob):
        raise ContractError(f"{path}: manifest runs past end of file")
    try:
        manifest = json.loads(blob[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContractError(f"{path}: corrupt manifest ({exc})") from exc
    if not isinstance(manifest, dict):
        raise ContractError(f"{path}: manifest must be a JSON object")
    base = start + header_len

    tensors: Dict[str, Tensor] = {}
    for name, entry in manifest.items():
        try:
            dtype = np.dtype(_DTYPES[entry["dtype"]])
            begin = base + int(entry["offset"])
            end = begin + int(entry["nbytes"])
            shape = [int(n) for n in entry["shape"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"{path}: bad manifest entry for '{name}' ({exc!r})") from exc
        if end > len(blob):
            raise ContractError(f"{path}: payload for '{name}' runs past end of file")
        if int(np.prod(shape)) * dtype.itemsize != end - begin:
            raise ContractError(f"{path}: '{name}' has {end - begin} bytes for shape {shape}")
        arr = np.frombuffer(blob[begin:end], dtype=dtype).reshape(shape)
        tensors[name] = Tensor(arr.astype(entry["dtype"]), dtype=entry["dtype"])
    return tensors
