"""Bit-exact binary checkpoints with CRC-32 integrity.

Layout (little-endian):

    magic  b"TRON"
    u16    format version (currently 1)
    u32    config length; canonical key-sorted JSON bytes
    u32    scaler length; canonical key-sorted JSON bytes
    u64    parameter count; that many float64 values
    u32    CRC-32 of all preceding bytes

Floats serialize via ``repr`` round-tripping, so save -> load reproduces
model outputs bitwise.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from tron.errors import CheckpointError
from tron.model import ModelConfig, TronModel

MAGIC = b"TRON"
VERSION = 1


def checkpoint_bytes(config: ModelConfig, flat_params: np.ndarray,
                     scaler_state: dict) -> bytes:
    config_json = config.to_json().encode()
    scaler_json = json.dumps(scaler_state, sort_keys=True,
                             separators=(",", ":")).encode()
    params = np.ascontiguousarray(flat_params, dtype="<f8")
    body = b"".join([
        MAGIC,
        struct.pack("<H", VERSION),
        struct.pack("<I", len(config_json)), config_json,
        struct.pack("<I", len(scaler_json)), scaler_json,
        struct.pack("<Q", params.size), params.tobytes(),
    ])
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(path, config: ModelConfig, flat_params: np.ndarray,
                    scaler_state: dict) -> None:
    Path(path).write_bytes(checkpoint_bytes(config, flat_params, scaler_state))


def load_checkpoint(path) -> tuple[ModelConfig, np.ndarray, dict]:
    """Returns (config, flat parameter vector, scaler state)."""
    raw = Path(path).read_bytes()
    if len(raw) < 14:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, crc_bytes = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupt")
    if body[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    offset = 6
    (config_len,) = struct.unpack_from("<I", body, offset)
    offset += 4
    config_json = body[offset:offset + config_len].decode()
    offset += config_len
    (scaler_len,) = struct.unpack_from("<I", body, offset)
    offset += 4
    scaler_state = json.loads(body[offset:offset + scaler_len].decode())
    offset += scaler_len
    (n_params,) = struct.unpack_from("<Q", body, offset)
    offset += 8
    expected = offset + 8 * n_params
    if len(body) != expected:
        raise CheckpointError(
            f"{path}: parameter block length {len(body) - offset} does not "
            f"match declared count {n_params}")
    params = np.frombuffer(body, dtype="<f8", count=n_params,
                           offset=offset).copy()
    config = ModelConfig.from_json(config_json)
    return config, params, scaler_state


def load_model(path, seed: int = 0) -> tuple[TronModel, dict]:
    """Rebuild a model from a checkpoint; returns (model, scaler state)."""
    config, params, scaler_state = load_checkpoint(path)
    model = TronModel(config, seed=seed)
    if params.size != model.n_params:
        raise CheckpointError(
            f"{path}: parameter count {params.size} does not match the "
            f"config's expected {model.n_params}")
    model.set_flat_values(params)
    return model, scaler_state
