"""Checkpoint save/load on top of the named-array container."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .arrayio import read_container, write_container
from .config import from_flat, to_flat, TrainConfig
from .encoders import GlobalAlignment
from .model import SGMN


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().to(torch.float32).numpy()


def build_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)


def save_checkpoint(path: str | Path, model: SGMN, optimizer: torch.optim.Optimizer | None,
                    step: int) -> None:
    """Write parameters, Adam moments, config and step counter to one file."""
    arrays = {f"param/{k}": _np(v) for k, v in model.state_dict().items()}
    trainable = [n for n, p in model.named_parameters() if p.requires_grad]
    if optimizer is not None:
        by_id = {id(p): n for n, p in model.named_parameters()}
        for p in optimizer.param_groups[0]["params"]:
            state = optimizer.state.get(p)
            if not state:
                continue
            name = by_id[id(p)]
            for key in ("step", "exp_avg", "exp_avg_sq"):
                arrays[f"optim/{name}/{key}"] = _np(torch.as_tensor(state[key]))
    meta = {"config": to_flat(model.cfg), "step": step, "trainable": trainable}
    write_container(path, arrays, meta)


def load_checkpoint(path: str | Path, with_optimizer: bool = True):
    """Return ``(model, optimizer, config, step)``; optimizer is None if not requested."""
    arrays, meta = read_container(path)
    cfg = from_flat(meta["config"])
    torch.manual_seed(cfg.seed)
    model = SGMN(cfg)
    params = {k[len("param/"):]: torch.from_numpy(v.copy()) for k, v in arrays.items() if k.startswith("param/")}
    model.load_state_dict(params)
    optimizer = None
    if with_optimizer:
        optimizer = build_optimizer(model, cfg)
        named = dict(model.named_parameters())
        for name in meta["trainable"]:
            key = f"optim/{name}/exp_avg"
            if key not in arrays:
                continue
            optimizer.state[named[name]] = {
                "step": torch.tensor(float(arrays[f"optim/{name}/step"])),
                "exp_avg": torch.from_numpy(arrays[key].copy()),
                "exp_avg_sq": torch.from_numpy(arrays[f"optim/{name}/exp_avg_sq"].copy()),
            }
    return model, optimizer, cfg, int(meta["step"])


def load_alignment(path: str | Path) -> tuple[GlobalAlignment, TrainConfig]:
    """Load only the inference-time encoders; graph and mining parameters are never read."""
    arrays, meta = read_container(path)
    cfg = from_flat(meta["config"])
    return alignment_from_arrays(arrays, cfg), cfg


def alignment_from_arrays(arrays: dict[str, np.ndarray], cfg: TrainConfig) -> GlobalAlignment:
    gra = GlobalAlignment(cfg.encoder, use_tmc=cfg.use_tmc)
    prefix = "param/gra."
    gra.load_state_dict({k[len(prefix):]: torch.from_numpy(v.copy()) for k, v in arrays.items()
                         if k.startswith(prefix)})
    return gra
