"""Checkpoint directories: one ``.mgt`` file per parameter plus ``manifest.json``."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import InputError
from ..numerics import mgt
from ..params import ParamStore
from .config import PipelineConfig
from .model import init_params

MANIFEST = "manifest.json"
FORMAT = "motiongraph-checkpoint/1"


def save_checkpoint(directory: str | os.PathLike, params: ParamStore, cfg: PipelineConfig) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, p in params.items():
        fname = f"{name}.mgt"
        mgt.save(out / fname, p.data)
        entries.append({"name": name, "file": fname, "shape": list(p.shape), "dtype": str(p.dtype)})
    manifest = {"format": FORMAT, "config": cfg.to_dict(), "parameters": entries}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def load_checkpoint(directory: str | os.PathLike) -> tuple[PipelineConfig, ParamStore]:
    root = Path(directory)
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"{root}: no {MANIFEST}; not a checkpoint directory") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{root / MANIFEST}: malformed JSON ({exc.msg})") from None
    if manifest.get("format") != FORMAT:
        raise InputError(f"{root / MANIFEST}: unsupported format {manifest.get('format')!r}")
    try:
        cfg = PipelineConfig(**manifest["config"]).validate()
    except TypeError as exc:
        raise InputError(f"{root / MANIFEST}: bad config snapshot ({exc})") from None
    params = init_params(cfg)
    seen = set()
    for entry in manifest["parameters"]:
        name = entry["name"]
        if name not in params:
            raise InputError(f"{root}: checkpoint parameter {name} is not part of the model")
        value = mgt.load(root / entry["file"])
        if list(value.shape) != list(params[name].shape):
            raise InputError(f"{root / entry['file']}: shape {value.shape} does not match "
                             f"model parameter {name} {params[name].shape}")
        params[name].assign(np.asarray(value))
        seen.add(name)
    missing = [n for n in params if n not in seen]
    if missing:
        raise InputError(f"{root}: checkpoint lacks parameters {missing[:3]}...")
    return cfg, params
