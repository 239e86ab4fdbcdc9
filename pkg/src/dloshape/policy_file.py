"""Binary policy container.

Layout: magic "DLOP", u32 format version, u64 manifest length, UTF-8 JSON
manifest, the tensors named by the manifest as raw little-endian float64 in
declaration order, and a trailing u64 checksum (BLAKE2b-8) of everything
before it.  Loading verifies the checksum before touching any payload, so a
truncated or corrupted file never yields a partial policy.
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import DatasetFormatError
from .nets import D2rlNetSpec, D2rlNetwork
from .td3bc import PolicyParams

MAGIC = b"DLOP"
FORMAT_VERSION = 1

_NETS = ("actor", "q1", "q2", "target_actor", "target_q1", "target_q2")
_EXTRAS = ("state_mean", "state_std", "action_low", "action_high")


def _checksum(data: bytes) -> int:
    digest = hashlib.blake2b(data, digest_size=8).digest()
    return struct.unpack("<Q", digest)[0]


def _tensor_table(params: PolicyParams) -> list:
    table = []
    for net_name in _NETS:
        net: D2rlNetwork = getattr(params, net_name)
        for name, arr in net.state_items():
            table.append((f"{net_name}.{name}", arr))
    for name in _EXTRAS:
        table.append((name, getattr(params, name)))
    return table


def save_policy(params: PolicyParams, path: str, extra_manifest: dict | None = None):
    table = _tensor_table(params)
    manifest = {
        "format": FORMAT_VERSION,
        "dtype": str(np.dtype(params.dtype)),
        "actor_spec": vars(params.actor.spec),
        "critic_spec": vars(params.q1.spec),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in table],
    }
    if extra_manifest:
        manifest["train"] = extra_manifest
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    manifest_bytes = json.dumps(manifest).encode("utf-8")
    blob += struct.pack("<Q", len(manifest_bytes))
    blob += manifest_bytes
    for _, arr in table:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += struct.pack("<Q", _checksum(bytes(blob)))
    with open(path, "wb") as fh:
        fh.write(blob)


def load_policy(path: str) -> PolicyParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24 or blob[:4] != MAGIC:
        raise DatasetFormatError(f"{path} is not a policy file")
    stored = struct.unpack("<Q", blob[-8:])[0]
    if _checksum(blob[:-8]) != stored:
        raise DatasetFormatError(f"{path}: checksum mismatch (truncated or corrupt)")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {version}")
    mlen = struct.unpack("<Q", blob[8:16])[0]
    manifest = json.loads(blob[16:16 + mlen].decode("utf-8"))
    dtype = np.dtype(manifest["dtype"])
    actor_spec = D2rlNetSpec(**manifest["actor_spec"])
    critic_spec = D2rlNetSpec(**manifest["critic_spec"])

    nets = {}
    for net_name in _NETS:
        spec = actor_spec if "actor" in net_name else critic_spec
        nets[net_name] = D2rlNetwork(spec, rng=None, dtype=dtype, zero=True)

    offset = 16 + mlen
    values = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = blob[offset:offset + 8 * count]
        if len(raw) != 8 * count:
            raise DatasetFormatError(f"{path}: tensor payload shorter than declared")
        values[entry["name"]] = (
            np.frombuffer(raw, dtype="<f8").reshape(shape).astype(dtype)
        )
        offset += 8 * count
    if offset != len(blob) - 8:
        raise DatasetFormatError(f"{path}: trailing bytes after declared tensors")

    for full_name, arr in values.items():
        if "." in full_name and full_name.split(".", 1)[0] in _NETS:
            net_name, tensor_name = full_name.split(".", 1)
            try:
                nets[net_name].set_tensor(tensor_name, arr)
            except KeyError as err:
                raise DatasetFormatError(f"{path}: unexpected tensor {full_name}") from err
    return PolicyParams(
        actor=nets["actor"], q1=nets["q1"], q2=nets["q2"],
        target_actor=nets["target_actor"],
        target_q1=nets["target_q1"], target_q2=nets["target_q2"],
        state_mean=values["state_mean"], state_std=values["state_std"],
        action_low=values["action_low"], action_high=values["action_high"],
    )
