"""Model checkpoints: named float64 tensors behind a JSON header.

Byte layout (all integers little-endian)::

    b"ZSLC"                     magic
    u32 version                 = 1
    u32 header_len              then header_len bytes of UTF-8 JSON
    u32 n_tensors
    per tensor:
        u16 name_len, name (UTF-8)
        u8 ndim, ndim x u32 shape
        prod(shape) x f64 row-major data
    u32 CRC32 of every preceding byte

The header carries the model kind and its full config so a checkpoint is
self-describing.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Mapping

import numpy as np

from .cada_vae import CadaModel, CadaVaeConfig, LatentClassifier, VaeParams
from .simple_zsl import PARAM_NAMES, SimpleZslConfig, SimpleZslParams

MAGIC = b"ZSLC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, header: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(hdr)), hdr, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        a = np.asarray(arr, dtype="<f8", order="C")  # ascontiguousarray would promote 0-d
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch")
    version, hlen = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 12
    try:
        header = json.loads(body[pos:pos + hlen].decode("utf-8"))
        pos += hlen
        (n,) = struct.unpack_from("<I", body, pos)
        pos += 4
        tensors = {}
        for _ in range(n):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) * 8
            if pos + size > len(body):
                raise CheckpointError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(body, dtype="<f8", count=size // 8,
                                          offset=pos).reshape(shape).astype(np.float64)
            pos += size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint ({e})") from None
    if pos != len(body):
        raise CheckpointError(f"{path}: {len(body) - pos} trailing bytes")
    return header, tensors


# -- model helpers --------------------------------------------------------------


def save_simple(path, params: SimpleZslParams, config: SimpleZslConfig,
                classes: list[str] | None = None) -> None:
    header = {"model": "simple", "config": config.to_dict(), "classes": classes}
    write_checkpoint(path, header, params.as_dict())


def load_simple(path) -> tuple[SimpleZslParams, SimpleZslConfig, dict]:
    header, t = read_checkpoint(path)
    if header.get("model") != "simple":
        raise CheckpointError(f"{path}: holds a {header.get('model')!r} model, not 'simple'")
    return SimpleZslParams(*(t[k] for k in PARAM_NAMES)), SimpleZslConfig(**header["config"]), header


def save_cada(path, model: CadaModel, config: CadaVaeConfig,
              clf: LatentClassifier | None = None, classes: list[str] | None = None) -> None:
    header = {
        "model": "cada",
        "config": config.to_dict(),
        "classes": classes,
        "img_dims": [model.img_vae.in_dim, model.img_vae.latent_dim],
        "aux_dims": [model.aux_vae.in_dim, model.aux_vae.latent_dim],
    }
    tensors = {**{"img." + k: v for k, v in model.img_vae.params.items()},
               **{"aux." + k: v for k, v in model.aux_vae.params.items()}}
    if clf is not None:
        tensors["clf.W"], tensors["clf.b"] = clf.W, clf.b
    write_checkpoint(path, header, tensors)


def load_cada(path) -> tuple[CadaModel, CadaVaeConfig, LatentClassifier | None, dict]:
    header, t = read_checkpoint(path)
    if header.get("model") != "cada":
        raise CheckpointError(f"{path}: holds a {header.get('model')!r} model, not 'cada'")
    cfg = CadaVaeConfig(**header["config"])

    def vae(prefix, dims, enc, dec):
        p = {k[len(prefix):]: v for k, v in t.items() if k.startswith(prefix)}
        return VaeParams(p, dims[0], dims[1], getattr(cfg, enc), getattr(cfg, dec))

    model = CadaModel(vae("img.", header["img_dims"], "img_encoder", "img_decoder"),
                      vae("aux.", header["aux_dims"], "aux_encoder", "aux_decoder"))
    clf = LatentClassifier(t["clf.W"], t["clf.b"]) if "clf.W" in t else None
    return model, cfg, clf, header
