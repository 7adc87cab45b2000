"""Experiment configuration: one JSON file drives the whole pipeline.

Defaults follow the reference setup: 3 quantization levels with 256-entry
codebooks, a 128-dim common space, beam 20 with max decoding length 20,
history window 50, Recall/NDCG at K in {5, 10, 20} over 5 trial seeds, and
a 2000-step alignment stage at learning rate 1e-4.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .embedstore import MODALITIES
from .errors import ConfigError

FUSIONS = ("unimodal", "early", "lateA", "lateB", "lateC")

DEFAULTS: dict[str, Any] = {
    "name": "experiment",
    "data": {"synthetic": {"n_items": 200, "n_users": 300, "n_clusters": 8, "dim": 32,
                           "cross_modal_correlation": 0.9, "seed": 0}},
    "modalities": {"text": {"source": "synthetic"}, "image": {"source": "synthetic"}},
    "roles": {"img": "image", "txt": "text"},
    "projection": {"dim": 128, "seed": 0},
    "rvq": {"levels": 3, "codebook_size": 256, "mode": "kmeans_rvq", "seed": 0,
            "beta": 0.25, "n_init": 10, "gate_alpha": 0.5},
    "fusion": "unimodal",
    "alignment": {"enabled": False, "steps": 2000, "lr": 1e-4},
    "model": {"width": 128, "heads": 4, "ff_width": 512, "enc_layers": 2, "dec_layers": 2,
              "dropout": 0.0, "max_positions": 0},  # 0 = derive from history window
    "train": {"lr": 1e-3, "batch_size": 64, "steps": 2000, "clip_norm": 1.0, "optimizer": "adam"},
    "eval": {"ks": [5, 10, 20], "seeds": [0, 1, 2, 3, 4], "beam": 20, "max_len": 20,
             "max_history": 50, "filter_seen": False},
    "render": {"canvas": 1024, "glyph_size": 16, "margin": 16, "wrap": None,
               "resolution": 1024, "encode_dim": 64, "encoder_seed": 0},
    "output_dir": "runs/experiment",
}

VALID_SOURCES = ("synthetic", "dir", "render", "shuffled")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    open_section = path.startswith(("data", "modalities"))  # shapes vary by source
    for key, val in override.items():
        if key not in base:
            if open_section:
                out[key] = copy.deepcopy(val)
                continue
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, path + key + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = cls(raw=_merge(DEFAULTS, data))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def __getitem__(self, key: str):
        return self.raw[key]

    # ------------------------------------------------------------ checks

    @property
    def fusion(self) -> str:
        return self.raw["fusion"]

    @property
    def used_modalities(self) -> list[str]:
        roles = self.raw["roles"]
        if self.fusion == "unimodal":
            return [roles["txt"]]
        return [roles["img"], roles["txt"]]

    @property
    def is_synthetic(self) -> bool:
        return "synthetic" in self.raw["data"]

    def validate(self) -> None:
        raw = self.raw
        if raw["fusion"] not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}, got {raw['fusion']!r}")
        roles = raw["roles"]
        for slot in ("img", "txt"):
            if roles.get(slot) not in MODALITIES:
                raise ConfigError(f"roles.{slot} must name a modality, got {roles.get(slot)!r}")
        if raw["fusion"] != "unimodal" and roles["img"] == roles["txt"]:
            raise ConfigError("fused strategies need two distinct modalities")
        if raw["alignment"]["enabled"] and raw["fusion"] != "lateC":
            raise ConfigError("alignment pretraining requires fusion=lateC")
        for modality in self.used_modalities:
            spec = raw["modalities"].get(modality)
            if spec is None:
                raise ConfigError(f"modality {modality!r} is used but has no source")
            src = spec.get("source")
            if src not in VALID_SOURCES:
                raise ConfigError(f"modalities.{modality}.source must be one of {VALID_SOURCES}")
            if src == "dir" and not spec.get("dir"):
                raise ConfigError(f"modalities.{modality} source 'dir' needs a 'dir' path")
            if src == "render" and modality != "ocr_text":
                raise ConfigError("source 'render' is only valid for the ocr_text modality")
            if src in ("synthetic", "shuffled") and not self.is_synthetic:
                raise ConfigError(f"modalities.{modality} source {src!r} needs synthetic data")
        if not self.is_synthetic:
            for key in ("interactions", "catalog"):
                if key not in raw["data"]:
                    raise ConfigError(f"data.{key} required for file-backed experiments")
        if raw["rvq"]["mode"] not in ("kmeans_rvq", "rqvae"):
            raise ConfigError("rvq.mode must be kmeans_rvq or rqvae")
        if not raw["eval"]["seeds"]:
            raise ConfigError("eval.seeds must not be empty")
        if raw["render"]["canvas"] % raw["render"]["resolution"] != 0:
            raise ConfigError("render.resolution must divide render.canvas")

    # ------------------------------------------------------------ digest

    def canonical(self) -> dict:
        out = copy.deepcopy(self.raw)
        out.pop("output_dir", None)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def section_digest(self, *keys: str) -> str:
        blob = json.dumps({k: self.canonical().get(k) for k in keys},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
