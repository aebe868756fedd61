"""
S2SM model files.

Layout (little-endian)::

    b"S2SM"            magic
    u32                format version
    u32                length of the blueprint block
    bytes              blueprint, UTF-8 JSON
    u64                parameter count
    f64 * count        parameters, per layer in graph order, weight then bias
"""

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import FormatError, reading
from .network import PartNetwork, blueprint_from_dict, build_network

logger = logging.getLogger("s2sreid.nn")

MAGIC = b"S2SM"
VERSION = 1

_HEADER = struct.Struct("<4sII")
_COUNT = struct.Struct("<Q")


def encode_model(net: PartNetwork) -> bytes:
    """Serialize a network to S2SM bytes."""
    blueprint = json.dumps(net.blueprint.to_dict(), sort_keys=True).encode("utf-8")
    return b"".join([
        _HEADER.pack(MAGIC, VERSION, len(blueprint)),
        blueprint,
        _COUNT.pack(net.param_count),
        np.asarray(net.params, dtype="<f8").tobytes(),
    ])


def decode_model(data: bytes, source: str = "<bytes>") -> PartNetwork:
    """
    Rebuild a network from S2SM bytes.

    Raises:
        FormatError: wrong magic, unsupported version, truncated data, or a
            blueprint that does not build, or a parameter count that does not
            match the blueprint
    """
    if len(data) < _HEADER.size:
        raise FormatError(f"{source}: file too short for an S2SM header")
    magic, version, blueprint_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported format version {version}")

    offset = _HEADER.size
    if len(data) < offset + blueprint_len + _COUNT.size:
        raise FormatError(f"{source}: truncated blueprint block")
    try:
        blueprint = blueprint_from_dict(json.loads(data[offset:offset + blueprint_len]))
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{source}: unreadable blueprint: {e}") from e
    offset += blueprint_len

    (count,) = _COUNT.unpack_from(data, offset)
    offset += _COUNT.size
    payload = data[offset:]
    if len(payload) != count * 8:
        raise FormatError(f"{source}: expected {count} parameters, found {len(payload) // 8}")

    try:
        net = build_network(blueprint)
    except (ValueError, TypeError) as e:
        raise FormatError(f"{source}: blueprint does not build: {e}") from e
    if net.param_count != count:
        raise FormatError(
            f"{source}: blueprint needs {net.param_count} parameters, file holds {count}"
        )
    return net.with_params(np.frombuffer(payload, dtype="<f8").astype(np.float64))


def save_model(net: PartNetwork, path: Union[str, Path]) -> Path:
    """Write a network to ``path``, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_model(net))
    logger.debug("wrote %s (%d parameters)", path, net.param_count)
    return path


def load_model(path: Union[str, Path]) -> PartNetwork:
    """
    Read a network written by :func:`save_model`.

    Raises:
        FormatError: if the file is missing or is not a valid S2SM file
        DataError: if the file cannot be read
    """
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"model file not found: {path}")
    with reading(path):
        data = path.read_bytes()
    return decode_model(data, str(path))
