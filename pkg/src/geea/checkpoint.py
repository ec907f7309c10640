"""Parameter archive: a zip of raw little-endian float32 tensors plus a manifest.

Layout::

    manifest.json        {"format": "geea-params/1", "tensors": {name: {"shape": [...], "offset": k}}}
    tensors/<k>.f32      raw little-endian float32, C order

Entries are stored uncompressed with a fixed timestamp, so equal parameters
give byte-identical archives. Parameter names are the ``state_dict`` keys of
:class:`geea.training.GEEAModel`, e.g. ``encoder.fusion.weight``,
``mvae.cells.graph.mu_head.bias`` or ``decoders.decoders.target.attr.out.weight``.
"""

from __future__ import annotations

import json
import os
import zipfile
from collections.abc import Mapping

import numpy as np
import torch

FORMAT = "geea-params/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_params(path: str | os.PathLike, tensors: Mapping[str, torch.Tensor]) -> None:
    manifest = {"format": FORMAT, "tensors": {}}
    with zipfile.ZipFile(path, "w") as zf:
        for k, name in enumerate(sorted(tensors)):
            arr = np.asarray(tensors[name].detach().cpu().numpy(), dtype="<f4", order="C")
            manifest["tensors"][name] = {"shape": list(arr.shape), "offset": k}
            _entry(zf, f"tensors/{k}.f32", arr.tobytes())
        _entry(zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1).encode())


def load_params(path: str | os.PathLike) -> dict[str, torch.Tensor]:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != FORMAT:
            raise ValueError(f"{path}: unsupported archive format {manifest.get('format')!r}")
        out = {}
        for name, meta in manifest["tensors"].items():
            raw = np.frombuffer(zf.read(f"tensors/{meta['offset']}.f32"), dtype="<f4")
            out[name] = torch.from_numpy(raw.reshape(tuple(meta["shape"])).astype(np.float32))
    return out
