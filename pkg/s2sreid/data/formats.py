"""
On-disk dataset formats.

A dataset is a directory holding ``manifest.txt`` plus tensor files. Each
manifest line is ``identity,view,relative-path``; lines starting with ``#``
and blank lines are skipped. Tiny fixtures may instead inline the feature
vector: ``identity,view,v0,v1,...``.

Tensor files (``.s2sd``) are little-endian: magic ``b"S2SD"``, u32 rank,
u32 extents, then the f64 payload in row-major order.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import DataError, FormatError, ParseError, reading
from .dataset import Dataset, Record, View

logger = logging.getLogger("s2sreid.data")

MAGIC = b"S2SD"
MANIFEST_NAME = "manifest.txt"
TENSOR_DIR = "tensors"

_RANK = struct.Struct("<4sI")


def encode_tensor(array: np.ndarray) -> bytes:
    """Serialize an array to S2SD bytes."""
    array = np.asarray(array, dtype=np.float64)
    header = _RANK.pack(MAGIC, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    return header + array.astype("<f8").tobytes()


def decode_tensor(data: bytes, source: str = "<bytes>") -> np.ndarray:
    """
    Parse S2SD bytes.

    Raises:
        FormatError: wrong magic, or a payload whose length disagrees with
            the extents
    """
    if len(data) < _RANK.size:
        raise FormatError(f"{source}: file too short for an S2SD header")
    magic, rank = _RANK.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    offset = _RANK.size
    if len(data) < offset + 4 * rank:
        raise FormatError(f"{source}: truncated extents")
    shape = struct.unpack_from(f"<{rank}I", data, offset)
    offset += 4 * rank
    if any(extent == 0 for extent in shape):
        raise FormatError(f"{source}: zero extent in shape {shape}")
    expected = int(np.prod(shape)) * 8
    if len(data) - offset != expected:
        raise FormatError(f"{source}: payload is {len(data) - offset} bytes, shape {shape} needs {expected}")
    return np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64).reshape(shape)


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"tensor file not found: {path}")
    with reading(path):
        data = path.read_bytes()
    return decode_tensor(data, str(path))


def write_tensor(array: np.ndarray, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _manifest_path(path: Path) -> Path:
    return path / MANIFEST_NAME if path.is_dir() else path


def load_dataset(path: Union[str, Path]) -> Dataset:
    """
    Load a dataset from a directory (or a manifest file directly).

    Tensor paths are resolved relative to the manifest's directory.

    Raises:
        DataError: if the manifest or a referenced tensor is missing, or an
            identity lacks one of the two views
        ParseError: on a malformed manifest line, with its line number
    """
    manifest = _manifest_path(Path(path))
    if not manifest.is_file():
        raise DataError(f"manifest not found: {manifest}")
    root = manifest.parent

    records = []
    with reading(manifest), open(manifest, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [part.strip() for part in line.split(",")]
            if len(fields) < 3:
                raise ParseError(
                    f"expected 'identity,view,path' or inline values, got {line!r}",
                    str(manifest), lineno,
                )
            try:
                identity = int(fields[0])
            except ValueError:
                raise ParseError(f"identity must be an integer, got {fields[0]!r}",
                                 str(manifest), lineno) from None
            try:
                view = View.from_str(fields[1])
            except ValueError as e:
                raise ParseError(str(e), str(manifest), lineno) from None

            if len(fields) == 3 and not _is_number(fields[2]):
                sample = read_tensor(root / fields[2])
            else:
                try:
                    sample = np.array([float(v) for v in fields[2:]], dtype=np.float64)
                except ValueError:
                    raise ParseError(f"inline values must be numbers: {line!r}",
                                     str(manifest), lineno) from None
            records.append(Record(identity, view, sample))

    dataset = Dataset(records)
    dataset.validate(require_both_views=True)
    logger.info("loaded %d records of %d identities from %s",
                len(dataset), len(dataset.identities()), manifest)
    return dataset


def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Path:
    """
    Write a dataset as ``manifest.txt`` plus one S2SD file per record.

    Returns:
        Path of the written manifest
    """
    directory = Path(directory)
    (directory / TENSOR_DIR).mkdir(parents=True, exist_ok=True)
    lines = ["# identity,view,path"]
    for index, rec in enumerate(dataset.records):
        relative = f"{TENSOR_DIR}/{index:06d}.s2sd"
        write_tensor(rec.sample, directory / relative)
        lines.append(f"{rec.identity},{rec.view.name},{relative}")
    manifest = directory / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote %d records to %s", len(dataset), directory)
    return manifest
