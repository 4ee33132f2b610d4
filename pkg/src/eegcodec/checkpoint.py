"""Named-tensor checkpoint archives and partial (name+shape matched) loading.

Archive layout::

    b"EEGK" | version u16 | manifest length u32 | manifest | tensor blob

The manifest is UTF-8 text.  Its first line is ``config=<json>``; each
further line is ``name<TAB>shape<TAB>dtype<TAB>offset<TAB>nbytes`` with
offsets relative to the start of the blob.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError, IncompatibleCheckpointError

log = logging.getLogger(__name__)

CKPT_MAGIC = b"EEGK"
CKPT_VERSION = 1
_PREAMBLE = struct.Struct("<4sHI")
_DTYPES = {"float32": torch.float32, "float64": torch.float64, "int64": torch.int64}


def save_checkpoint(path, tensors: dict[str, torch.Tensor], config: dict | None = None) -> None:
    lines = [f"config={json.dumps(config or {}, sort_keys=True)}"]
    blobs, offset = [], 0
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        dtype = str(t.dtype).replace("torch.", "")
        if dtype not in _DTYPES:
            raise FormatError(f"unsupported dtype {dtype} for tensor {name}")
        if "\t" in name or "\n" in name:
            raise FormatError(f"tensor name {name!r} contains a tab or newline")
        raw = t.numpy().astype(t.numpy().dtype.newbyteorder("<"), copy=False).tobytes()
        shape = ",".join(str(s) for s in t.shape)
        lines.append(f"{name}\t{shape}\t{dtype}\t{offset}\t{len(raw)}")
        blobs.append(raw)
        offset += len(raw)
    manifest = "\n".join(lines).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREAMBLE.pack(CKPT_MAGIC, CKPT_VERSION, len(manifest)))
        fh.write(manifest)
        for b in blobs:
            fh.write(b)


def read_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise FormatError(f"{path}: too short for a checkpoint")
    magic, version, mlen = _PREAMBLE.unpack_from(raw)
    if magic != CKPT_MAGIC or version != CKPT_VERSION:
        raise FormatError(f"{path}: not an EEGK v{CKPT_VERSION} checkpoint")
    lines = raw[_PREAMBLE.size:_PREAMBLE.size + mlen].decode("utf-8").split("\n")
    if not lines or not lines[0].startswith("config="):
        raise FormatError(f"{path}: manifest lacks a config line")
    config = json.loads(lines[0][len("config="):])
    blob = memoryview(raw)[_PREAMBLE.size + mlen:]
    tensors = {}
    for line in lines[1:]:
        try:
            name, shape, dtype, off, nbytes = line.split("\t")
            shape = tuple(int(s) for s in shape.split(",")) if shape else ()
            np_dtype = np.dtype(dtype).newbyteorder("<")
            arr = np.frombuffer(blob[int(off):int(off) + int(nbytes)], dtype=np_dtype).reshape(shape)
        except (ValueError, TypeError) as exc:
            raise FormatError(f"{path}: bad manifest line {line!r} ({exc})") from exc
        tensors[name] = torch.from_numpy(arr.astype(np_dtype.newbyteorder("="), copy=True))
    return tensors, config


def model_tensors(model: torch.nn.Module) -> dict[str, torch.Tensor]:
    return dict(model.state_dict())


@dataclass
class LoadReport:
    loaded: list[str] = field(default_factory=list)
    initialized: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def summary(self) -> str:
        return (f"loaded {len(self.loaded)}, freshly initialized {len(self.initialized)}, "
                f"skipped {len(self.skipped)}")


def load_matching(model: torch.nn.Module, tensors: dict[str, torch.Tensor]) -> LoadReport:
    """Copy every checkpoint tensor whose name and shape match a model tensor."""
    report = LoadReport()
    state = model.state_dict()
    update = {}
    for name, t in tensors.items():
        if name in state and tuple(state[name].shape) == tuple(t.shape):
            update[name] = t.to(state[name].dtype)
            report.loaded.append(name)
        else:
            report.skipped.append(name)
    report.initialized = [n for n in state if n not in update]
    if not update:
        raise IncompatibleCheckpointError("no checkpoint tensor matches the model by name and shape")
    model.load_state_dict(update, strict=False)
    log.info("checkpoint load: %s", report.summary())
    return report


def load_pretrained(checkpoint_path, model: torch.nn.Module) -> LoadReport:
    """Warm-start ``model`` from a checkpoint; adapters absent there stay freshly initialized."""
    tensors, _ = read_checkpoint(checkpoint_path)
    return load_matching(model, tensors)


def build_model(config: dict):
    from .codec import Codec, CodecConfig
    from .multichannel import McConfig, MultiChannelCodec
    from .rvq import RVQConfig

    codec_cfg = CodecConfig(**config["codec"])
    rvq_cfg = RVQConfig(**config["rvq"])
    if config.get("kind", "sc") == "mc":
        model = MultiChannelCodec(codec_cfg, rvq_cfg, McConfig(**config["mc"]))
    else:
        model = Codec(codec_cfg, rvq_cfg)
    model.quantizer.active_depth = int(config.get("active_depth", rvq_cfg.n_books))
    return model


def save_model(model, path, extra: dict[str, torch.Tensor] | None = None, info: dict | None = None) -> None:
    tensors = model_tensors(model)
    for k, v in (extra or {}).items():
        tensors[k] = v
    cfg = model.model_config()
    if info:
        cfg["info"] = info
    save_checkpoint(path, tensors, cfg)


def load_model(path):
    """Rebuild a model from a checkpoint written by :func:`save_model`."""
    tensors, config = read_checkpoint(path)
    if "codec" not in config:
        raise FormatError(f"{path}: checkpoint carries no model config")
    model = build_model(config)
    report = load_matching(model, tensors)
    if report.initialized:
        raise IncompatibleCheckpointError(f"{path}: missing tensors {report.initialized[:5]}")
    model.eval()
    return model
