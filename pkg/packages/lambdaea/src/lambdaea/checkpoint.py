"""Binary encoder checkpoints.

Layout: a little-endian header ``magic "LMBD", version, n_entities, n_relations, d, L,
n_proxy, clf_hidden`` (``4s`` + seven ``uint32``), then every tensor of the encoder's
``state_dict`` in declaration order as row-major little-endian float32.
"""

from __future__ import annotations

import struct
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from lambdaea.exceptions import SerializationError
from lambdaea.keesa import EncoderConfig, KeesaEncoder
from lambdaea.logging import get_logger, log_artifact, log_performance

logger = get_logger("checkpoint")

MAGIC = b"LMBD"
VERSION = 1
_HEADER = struct.Struct("<4s7I")
_FLOAT = np.dtype("<f4")


def save_checkpoint(model: KeesaEncoder, path: Path | str) -> Path:
    target = Path(path)
    cfg = model.config
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        model.n_entities,
        model.n_relations,
        cfg.dim,
        cfg.depth,
        cfg.n_proxy,
        cfg.clf_hidden,
    )
    try:
        with target.open("wb") as fh:
            fh.write(header)
            for tensor in model.state_dict().values():
                block = tensor.detach().cpu().contiguous().numpy().astype(_FLOAT, copy=False)
                fh.write(block.tobytes(order="C"))
    except OSError as e:
        raise SerializationError(f"cannot write checkpoint {target}: {e}") from e
    log_artifact(logger, "checkpoint", target)
    return target


def load_checkpoint(path: Path | str, config: EncoderConfig | None = None) -> KeesaEncoder:
    """Rebuild an encoder from a checkpoint file.

    Args:
        path: Checkpoint written by :func:`save_checkpoint`
        config: Settings not stored in the header (dropout, ablation switches); the stored
            dimensions always win

    Returns:
        The encoder with all parameters restored (as float32)

    Raises:
        SerializationError: Bad magic, unknown version or truncated payload
    """
    source = Path(path)
    start_time = time.perf_counter()
    try:
        payload = source.read_bytes()
    except OSError as e:
        raise SerializationError(f"cannot read checkpoint {source}: {e}") from e

    try:
        magic, version, n_entities, n_relations, dim, depth, n_proxy, clf_hidden = (
            _HEADER.unpack_from(payload)
        )
    except struct.error as e:
        raise SerializationError(f"{source}: truncated header") from e
    if magic != MAGIC:
        raise SerializationError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise SerializationError(f"{source}: unsupported checkpoint version {version}")

    base = config or EncoderConfig()
    cfg = replace(base, dim=dim, depth=depth, n_proxy=n_proxy, clf_hidden=clf_hidden)
    model = KeesaEncoder(n_entities, n_relations, cfg)

    offset = _HEADER.size
    state = {}
    for name, tensor in model.state_dict().items():
        count = tensor.numel()
        end = offset + count * _FLOAT.itemsize
        if end > len(payload):
            raise SerializationError(f"{source}: truncated block {name!r}")
        block = np.frombuffer(payload, dtype=_FLOAT, count=count, offset=offset)
        state[name] = torch.from_numpy(block.reshape(tuple(tensor.shape)).copy())
        offset = end
    if offset != len(payload):
        raise SerializationError(f"{source}: {len(payload) - offset} trailing bytes")

    model.load_state_dict(state)
    log_performance(logger, f"checkpoint load ({n_entities} entities)", time.perf_counter() - start_time)
    return model
