"""Binary checkpoint container for models and environments.

Layout (all integers little-endian)::

    b"NPSP1" | uint32 version | uint32 header length | header JSON | payload

The header JSON holds the kind tag, free-form metadata and an ordered table
of ``{"name", "shape"}`` entries. The payload is the concatenation of those
arrays as little-endian float64, in table order.
"""

import json
import logging
import struct
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np
import torch
from pydantic import TypeAdapter, ValidationError

from placekit.app.errors import CorruptCheckpoint, InvalidConfig
from placekit.app.models.environment import EnvironmentConfig, SyntheticEnvironment
from placekit.app.models.kernel_params import KernelParams
from placekit.app.models.neural_process import NPArchitecture
from placekit.app.models.task import Normalizer
from placekit.app.services.core_math import DTYPE
from placekit.app.services.environment import build_environment
from placekit.app.services.gp import GPModel
from placekit.app.services.neural_process import NPModel
from placekit.app.services.reporting import atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"NPSP1"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<II")
_FLOAT = np.dtype("<f8")

KIND_NP = "np"
KIND_GP = "gp"
KIND_ENV = "env"
VERIFIED_ENV_FIELDS = ("lengthscale_1", "lengthscale_2", "mask", "elevation")

_kernel_params = TypeAdapter(KernelParams)


def encode_container(kind: str, metadata: dict[str, Any], arrays: dict[str, np.ndarray]) -> bytes:
    """Serialise named float64 arrays with a JSON header."""
    table = []
    chunks = []
    for name, array in arrays.items():
        data = np.ascontiguousarray(np.asarray(array, dtype=_FLOAT))
        table.append({"name": name, "shape": list(data.shape)})
        chunks.append(data.tobytes(order="C"))
    header = json.dumps(
        {"kind": kind, "metadata": metadata, "arrays": table}, sort_keys=True
    ).encode("utf-8")
    return MAGIC + _PREAMBLE.pack(FORMAT_VERSION, len(header)) + header + b"".join(chunks)


def decode_container(blob: bytes) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    """Inverse of :func:`encode_container`.

    Raises:
        CorruptCheckpoint: On a bad magic, unknown version, truncated header,
            malformed table or a payload whose length disagrees with it.
    """
    if not blob.startswith(MAGIC):
        raise CorruptCheckpoint("not a placekit checkpoint", detail="bad magic")
    offset = len(MAGIC)
    if len(blob) < offset + _PREAMBLE.size:
        raise CorruptCheckpoint("checkpoint preamble is truncated", detail="truncated")
    version, header_len = _PREAMBLE.unpack_from(blob, offset)
    if version != FORMAT_VERSION:
        raise CorruptCheckpoint(
            f"unsupported checkpoint version {version}", detail=f"version {version}"
        )
    offset += _PREAMBLE.size
    if len(blob) < offset + header_len:
        raise CorruptCheckpoint("checkpoint header is truncated", detail="truncated")
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
        kind = str(header["kind"])
        metadata = dict(header["metadata"])
        table = [(str(e["name"]), tuple(int(s) for s in e["shape"])) for e in header["arrays"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint header: {exc}", detail="header") from exc
    offset += header_len

    payload = memoryview(blob)[offset:]
    expected = sum(int(np.prod(shape, dtype=np.int64)) for _, shape in table) * _FLOAT.itemsize
    if len(payload) != expected:
        raise CorruptCheckpoint(
            f"payload has {len(payload)} bytes, shape table needs {expected}",
            detail="payload length",
        )
    arrays: dict[str, np.ndarray] = {}
    cursor = 0
    for name, shape in table:
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = (
            np.frombuffer(payload, dtype=_FLOAT, count=count, offset=cursor)
            .reshape(shape)
            .astype(np.float64)
        )
        cursor += count * _FLOAT.itemsize
    return kind, metadata, arrays


def write_container(
    path: Path, kind: str, metadata: dict[str, Any], arrays: dict[str, np.ndarray]
) -> Path:
    """Encode and write atomically."""
    written = atomic_write(Path(path), encode_container(kind, metadata, arrays))
    logger.info("Saved %s checkpoint with %d arrays to %s", kind, len(arrays), written)
    return written


def read_container(path: Path) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    """Read and decode a container file."""
    return decode_container(Path(path).read_bytes())


def _expect_kind(found: str, wanted: str, path: Path) -> None:
    if found != wanted:
        raise CorruptCheckpoint(
            f"{path} holds a {found!r} checkpoint, expected {wanted!r}", detail="kind"
        )


@contextmanager
def _metadata(path: Path) -> Iterator[None]:
    """Report missing or invalid header metadata as a corrupt checkpoint."""
    try:
        yield
    except KeyError as exc:
        raise CorruptCheckpoint(
            f"{path} metadata lacks {exc.args[0]!r}", detail=f"metadata {exc.args[0]}"
        ) from exc
    except (TypeError, ValidationError, InvalidConfig) as exc:
        raise CorruptCheckpoint(f"{path} has invalid metadata: {exc}", detail="metadata") from exc


def save_np(model: NPModel, path: Path, config_sha256: str = "") -> Path:
    """Persist neural-process weights, architecture and normalizer."""
    arrays = {name: t.detach().cpu().numpy() for name, t in model.state_dict().items()}
    metadata = {
        "name": model.name,
        "architecture": model.architecture.model_dump(),
        "normalizer": model.normalizer.model_dump(),
        "config_sha256": config_sha256,
    }
    return write_container(path, KIND_NP, metadata, arrays)


def _np_from(path: Path, metadata: dict[str, Any], arrays: dict[str, np.ndarray]) -> NPModel:
    with _metadata(path):
        model = NPModel(
            NPArchitecture(**metadata["architecture"]),
            Normalizer(**metadata["normalizer"]),
            name=str(metadata.get("name", "np")),
        )
    state = {name: torch.from_numpy(array.copy()).to(DTYPE) for name, array in arrays.items()}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CorruptCheckpoint(f"weights do not fit the architecture: {exc}", "state") from exc
    model.eval()
    return model


def load_np(path: Path) -> NPModel:
    """Rebuild a neural process with bit-identical weights."""
    kind, metadata, arrays = read_container(path)
    _expect_kind(kind, KIND_NP, path)
    return _np_from(path, metadata, arrays)


def save_gp(model: GPModel, path: Path, config_sha256: str = "") -> Path:
    """Persist GP hyperparameters; array-valued parameters go to the payload."""
    dumped = model.params.model_dump()
    arrays = {k: v for k, v in dumped.items() if isinstance(v, np.ndarray)}
    scalars = {k: v for k, v in dumped.items() if not isinstance(v, np.ndarray)}
    metadata = {
        "name": model.name,
        "params": scalars,
        "normalizer": model.normalizer.model_dump(),
        "config_sha256": config_sha256,
    }
    return write_container(path, KIND_GP, metadata, arrays)


def _gp_from(path: Path, metadata: dict[str, Any], arrays: dict[str, np.ndarray]) -> GPModel:
    with _metadata(path):
        params = _kernel_params.validate_python({**metadata["params"], **arrays})
        return GPModel(str(metadata["name"]), params, Normalizer(**metadata["normalizer"]))


def load_gp(path: Path) -> GPModel:
    """Rebuild a fitted GP baseline."""
    kind, metadata, arrays = read_container(path)
    _expect_kind(kind, KIND_GP, path)
    return _gp_from(path, metadata, arrays)


def save_environment(env: SyntheticEnvironment, path: Path) -> Path:
    """Persist the environment config with the fields used to verify a rebuild."""
    arrays = {name: getattr(env, name) for name in VERIFIED_ENV_FIELDS}
    return write_container(path, KIND_ENV, {"config": env.config.model_dump()}, arrays)


def load_environment(path: Path) -> SyntheticEnvironment:
    """Rebuild the environment from its config and check it matches the stored fields."""
    kind, metadata, arrays = read_container(path)
    _expect_kind(kind, KIND_ENV, path)
    with _metadata(path):
        config = EnvironmentConfig(**metadata["config"])
    env = build_environment(config)
    for name in VERIFIED_ENV_FIELDS:
        stored = arrays.get(name)
        if stored is None or not np.array_equal(stored, getattr(env, name)):
            raise CorruptCheckpoint(
                f"rebuilt environment differs from checkpoint in {name}", detail="environment"
            )
    return env


def load_model(path: Path) -> GPModel | NPModel:
    """Load either model kind, dispatching on the container's tag."""
    kind, metadata, arrays = read_container(path)
    if kind == KIND_NP:
        return _np_from(path, metadata, arrays)
    if kind == KIND_GP:
        return _gp_from(path, metadata, arrays)
    raise CorruptCheckpoint(f"{path} does not hold a model (kind {kind!r})", detail="kind")
