"""End-to-end experiment orchestration with content-addressed stage caching.

Stage order: data -> embed -> ids -> sequences -> models -> report. Every
stage writes its artifacts plus a digest of its inputs under the output
directory; re-running with an unchanged config reuses cached stages, and
reports are byte-identical across runs because evaluation always reads the
on-disk artifacts (float32 checkpoints included) rather than live state.
"""

from __future__ import annotations

import contextlib
import csv
import json
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus, fusion, metrics, renderkit, rvq
from .config import ExperimentConfig
from .embedstore import (
    EmbeddingMatrix,
    Projection,
    project_matrix,
    read_matrix,
    write_matrix,
)
from .errors import ConfigError, ContractViolation, DataError
from .seq2seq import (
    ModelConfig,
    Seq2SeqModel,
    TrainConfig,
    align_pretrain,
    beam_decode,
    build_item_trie,
    instance_example,
    save_loss_curve,
    train,
)
from .synthetic import SyntheticSpec, make_study, shuffle_rows, write_study_files

STAGES = ("data", "embed", "ids", "sequences", "models", "report")

INCOMPLETE_SENTINEL = "_INCOMPLETE"
LOCK_SENTINEL = "_LOCK"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def _stage_fresh(stage_dir: Path, digest: str) -> bool:
    marker = stage_dir / "digest.txt"
    return marker.exists() and marker.read_text().strip() == digest


def _mark_stage(stage_dir: Path, digest: str) -> None:
    stage_dir.mkdir(parents=True, exist_ok=True)
    (stage_dir / "digest.txt").write_text(digest + "\n")


# ------------------------------------------------------------ checkpoints


def save_model(model: Seq2SeqModel, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    names = sorted(model.params)
    header = {
        "config": {
            "vocab_size": model.config.vocab_size,
            "width": model.config.width,
            "heads": model.config.heads,
            "ff_width": model.config.ff_width,
            "enc_layers": model.config.enc_layers,
            "dec_layers": model.config.dec_layers,
            "max_positions": model.config.max_positions,
            "dropout": model.config.dropout,
            "seed": model.config.seed,
        },
        "params": {n: list(model.params[n].shape) for n in names},
        "param_count": model.param_count,
        "dtype": "f32",
        "byte_order": "little",
    }
    _write_json(out_dir / "model.json", header)
    blob = np.concatenate([model.params[n].ravel() for n in names]).astype("<f4")
    (out_dir / "params.bin").write_bytes(blob.tobytes())


def load_model(in_dir: Path) -> Seq2SeqModel:
    header = _read_json(in_dir / "model.json")
    model = Seq2SeqModel(ModelConfig(**header["config"]))
    raw = np.frombuffer((in_dir / "params.bin").read_bytes(), dtype="<f4").astype(np.float64)
    offset = 0
    for name in sorted(header["params"]):
        shape = tuple(header["params"][name])
        size = int(np.prod(shape)) if shape else 1
        model.params[name] = raw[offset : offset + size].reshape(shape)
        offset += size
    if offset != raw.size:
        raise DataError(f"checkpoint {in_dir} has {raw.size} values, expected {offset}")
    return model


# ------------------------------------------------------------- pipeline


@dataclass
class StageResult:
    digest: str
    cached: bool


class Pipeline:
    def __init__(self, config: ExperimentConfig, out_dir: str | Path | None = None):
        self.config = config
        self.out = Path(out_dir or config.raw["output_dir"])
        self.results: dict[str, StageResult] = {}

    # ------------------------------------------------------------- stages

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def run_until(self, last_stage: str) -> None:
        if last_stage not in STAGES:
            raise ConfigError(f"unknown stage {last_stage!r}")
        for stage in STAGES[: STAGES.index(last_stage) + 1]:
            self._require(stage)

    def _require(self, stage: str) -> None:
        if stage not in self.results:  # each stage runs once per pipeline
            getattr(self, f"_run_{stage}")()

    def run(self) -> metrics.EvalReport:
        self.out.mkdir(parents=True, exist_ok=True)
        lock = self.out / LOCK_SENTINEL
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.close(fd)
        except FileExistsError:
            raise ConfigError(
                f"output dir {self.out} is locked by another run (remove {lock} if stale)"
            ) from None
        sentinel = self.out / INCOMPLETE_SENTINEL
        sentinel.write_text("run in progress or aborted\n")
        try:
            self.run_until("report")
        except Exception as e:
            e.stage = self._current_stage  # surfaced by the CLI with the cause
            raise
        finally:
            with contextlib.suppress(FileNotFoundError):
                lock.unlink()
        sentinel.unlink()
        return self.load_report()

    _current_stage = "setup"

    # ------------------------------------------------------------- data

    def _run_data(self) -> None:
        self._current_stage = "data"
        cfg = self.config
        stage = self.stage_dir("data")
        if cfg.is_synthetic:
            digest = cfg.section_digest("data")
        else:
            h = [cfg.section_digest("data")]
            for key in ("interactions", "catalog", "metadata"):
                path = cfg.raw["data"].get(key)
                if path:
                    h.append(_sha256_file(Path(path)))
            digest = _sha256_str("|".join(h))
        if not _stage_fresh(stage, digest):
            stage.mkdir(parents=True, exist_ok=True)
            if cfg.is_synthetic:
                spec = SyntheticSpec(**cfg.raw["data"]["synthetic"])
                study = make_study(spec)
                write_study_files(study, stage)
            else:
                for key in ("interactions", "catalog", "metadata"):
                    src = cfg.raw["data"].get(key)
                    if src:
                        shutil.copyfile(src, stage / _DATA_NAMES[key])
            log = corpus.load_interactions(stage / "interactions.tsv",
                                           corpus.load_catalog(stage / "catalog.json"))
            split = corpus.build_splits(log)
            _write_json(stage / "splits.json", {
                "train": split.train, "valid": split.valid, "test": split.test,
            })
            _mark_stage(stage, digest)
            self.results["data"] = StageResult(digest, cached=False)
        else:
            self.results["data"] = StageResult(digest, cached=True)

    def _load_data(self):
        stage = self.stage_dir("data")
        catalog = corpus.load_catalog(stage / "catalog.json")
        log = corpus.load_interactions(stage / "interactions.tsv", catalog)
        raw = _read_json(stage / "splits.json")
        split = corpus.SplitSpec(train=raw["train"], valid=raw["valid"], test=raw["test"])
        descriptions = {}
        meta = stage / "metadata.jsonl"
        if meta.exists():
            for line in meta.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    descriptions[rec["item_id"]] = rec.get("description", "")
        return catalog, log, split, descriptions

    # ------------------------------------------------------------- embed

    def _embed_inputs_digest(self) -> str:
        cfg = self.config
        used = cfg.used_modalities
        payload = {
            "used": used,
            "sources": {m: cfg.raw["modalities"][m] for m in used},
        }
        if any(cfg.raw["modalities"][m].get("source") == "render" for m in used):
            payload["render"] = cfg.raw["render"]
        return _sha256_str(json.dumps(payload, sort_keys=True))

    def _run_embed(self) -> None:
        self._require("data")
        self._current_stage = "embed"
        cfg = self.config
        stage = self.stage_dir("embed")
        digest = _sha256_str(self.results["data"].digest + self._embed_inputs_digest())
        if _stage_fresh(stage, digest):
            self.results["embed"] = StageResult(digest, cached=True)
            return
        catalog, _, _, descriptions = self._load_data()
        study = self._study_embeddings(catalog) if cfg.is_synthetic else None
        for modality in cfg.used_modalities:
            spec = cfg.raw["modalities"][modality]
            src = spec["source"]
            if src == "synthetic":
                matrix = study.matrices[modality]
            elif src == "shuffled":
                matrix = shuffle_rows(study.matrices[modality], seed=spec.get("shuffle_seed", 1))
            elif src == "dir":
                matrix = read_matrix(spec["dir"])
                if matrix.item_ids != catalog:
                    raise DataError(
                        f"embedding dir {spec['dir']} item order does not match the catalog"
                    )
            elif src == "render":
                matrix = self._render_embeddings(catalog, descriptions)
            else:  # pragma: no cover - validated earlier
                raise ConfigError(f"unknown source {src}")
            if matrix.modality != modality:
                matrix = EmbeddingMatrix(modality, matrix.encoder_name, matrix.item_ids,
                                         matrix.rows, extra=dict(matrix.extra))
            write_matrix(matrix, stage / modality)
        _mark_stage(stage, digest)
        self.results["embed"] = StageResult(digest, cached=False)

    def _study_embeddings(self, catalog):
        spec = SyntheticSpec(**self.config.raw["data"]["synthetic"])
        study = make_study(spec)
        if study.item_ids != catalog:
            raise DataError("synthetic catalog drifted from the data stage")
        return study.embeddings

    def _render_embeddings(self, catalog, descriptions) -> EmbeddingMatrix:
        r = self.config.raw["render"]
        render_cfg = renderkit.RenderConfig(
            canvas=r["canvas"], glyph_size=r["glyph_size"], margin=r["margin"], wrap=r["wrap"]
        )
        missing = [i for i in catalog if not descriptions.get(i)]
        if missing:
            raise DataError(f"items lack descriptions for rendering: {missing[:5]}...")
        rows = np.empty((len(catalog), r["encode_dim"]), dtype=np.float64)
        for k, item in enumerate(catalog):
            img = renderkit.render_text(descriptions[item], render_cfg)
            if r["resolution"] != r["canvas"]:
                img = renderkit.downsample(img, r["resolution"])
            rows[k] = renderkit.reference_visual_encode(img, r["encode_dim"], r["encoder_seed"])
        return EmbeddingMatrix(
            modality="ocr_text",
            encoder_name=f"reference-visual(seed={r['encoder_seed']})",
            item_ids=list(catalog),
            rows=rows,
            extra={"render_resolution": r["resolution"], "render_canvas": r["canvas"]},
        )

    # --------------------------------------------------------------- ids

    def _run_ids(self) -> None:
        self._require("embed")
        self._current_stage = "ids"
        cfg = self.config
        stage = self.stage_dir("ids")
        # late strategies share one tokenization; only early fusion reshapes it
        ids_payload = {
            "projection": cfg.raw["projection"],
            "rvq": cfg.raw["rvq"],
            "early": cfg.fusion == "early",
            "roles": cfg.raw["roles"] if cfg.fusion == "early" else None,
        }
        digest = _sha256_str(self.results["embed"].digest + json.dumps(ids_payload, sort_keys=True))
        if _stage_fresh(stage, digest):
            self.results["ids"] = StageResult(digest, cached=True)
            return
        stage.mkdir(parents=True, exist_ok=True)
        rv = cfg.raw["rvq"]
        proj_cfg = cfg.raw["projection"]
        projected: dict[str, np.ndarray] = {}
        catalog = None
        for modality in cfg.used_modalities:
            matrix = read_matrix(self.stage_dir("embed") / modality)
            catalog = matrix.item_ids
            proj = Projection.random(matrix.dim, proj_cfg["dim"],
                                     seed=_modality_seed(proj_cfg["seed"], modality))
            projected[modality] = project_matrix(matrix, proj)
            write_matrix(
                EmbeddingMatrix(modality, matrix.encoder_name + "+proj", matrix.item_ids,
                                projected[modality]),
                stage / f"projected_{modality}",
            )

        ids_by_stream: dict[str, dict[str, rvq.SemanticId]] = {}
        if cfg.fusion == "early":
            img_m, txt_m = cfg.raw["roles"]["img"], cfg.raw["roles"]["txt"]
            e_img, e_txt = projected[img_m], projected[txt_m]
            if rv["mode"] == "rqvae":
                model, gate = fusion.fit_gated_rqvae(
                    e_txt, e_img, levels=rv["levels"], codebook_size=rv["codebook_size"],
                    seed=rv["seed"], beta=rv["beta"],
                )
                fused = fusion.early_fuse(e_txt, e_img, gate)
            else:
                gate = fusion.ConstantGate(proj_cfg["dim"], alpha=rv["gate_alpha"])
                fused = fusion.early_fuse(e_txt, e_img, gate)
                model = rvq.fit(fused, rv["levels"], rv["codebook_size"], mode="kmeans_rvq",
                                seed=rv["seed"], n_init=rv["n_init"])
            model.save(stage / "rvq_fused")
            raw_ids = dict(zip(catalog, model.encode_batch(fused)))
            ids_by_stream["fused"] = rvq.resolve_collisions(raw_ids)
        else:
            for modality in cfg.used_modalities:
                model = rvq.fit(projected[modality], rv["levels"], rv["codebook_size"],
                                mode=rv["mode"], seed=rv["seed"], n_init=rv["n_init"])
                model.save(stage / f"rvq_{modality}")
                raw_ids = dict(zip(catalog, model.encode_batch(projected[modality])))
                ids_by_stream[modality] = rvq.resolve_collisions(raw_ids)

        vocab = fusion.Vocabulary.for_ids(ids_by_stream, rv["levels"], rv["codebook_size"])
        _write_json(stage / "vocab.json", vocab.to_json())
        _write_json(stage / "semantic_ids.json", {
            stream: {item: {"codes": list(sid.codes), "dedup": sid.dedup}
                     for item, sid in ids.items()}
            for stream, ids in ids_by_stream.items()
        })
        _mark_stage(stage, digest)
        self.results["ids"] = StageResult(digest, cached=False)

    def _load_ids(self):
        stage = self.stage_dir("ids")
        vocab = fusion.Vocabulary.from_json(_read_json(stage / "vocab.json"))
        raw = _read_json(stage / "semantic_ids.json")
        ids_by_stream = {
            stream: {item: rvq.SemanticId(tuple(rec["codes"]), rec["dedup"])
                     for item, rec in ids.items()}
            for stream, ids in raw.items()
        }
        return vocab, ids_by_stream

    # --------------------------------------------------------- sequences

    def _run_sequences(self) -> None:
        self._require("ids")
        self._current_stage = "sequences"
        cfg = self.config
        stage = self.stage_dir("sequences")
        digest = _sha256_str(self.results["ids"].digest + cfg.section_digest("fusion", "roles"))
        if _stage_fresh(stage, digest):
            self.results["sequences"] = StageResult(digest, cached=True)
            return
        vocab, ids_by_stream = self._load_ids()
        catalog, _, _, _ = self._load_data()
        roles = cfg.raw["roles"]
        seqs: dict[str, fusion.TokenSequence] = {}
        for item in catalog:
            if cfg.fusion == "unimodal":
                seqs[item] = fusion.unimodal_sequence(ids_by_stream[roles["txt"]][item], vocab, roles["txt"])
            elif cfg.fusion == "early":
                seqs[item] = fusion.unimodal_sequence(ids_by_stream["fused"][item], vocab, "fused", layout="early")
            else:
                s_img = ids_by_stream[roles["img"]][item]
                s_txt = ids_by_stream[roles["txt"]][item]
                builder = {"lateA": fusion.concat_ids, "lateB": fusion.interleave_ids,
                           "lateC": fusion.wrap_modality_aware}[cfg.fusion]
                seqs[item] = builder(s_img, s_txt, vocab, img=roles["img"], txt=roles["txt"])
        _write_json(stage / "sequences.json", {
            "layout": cfg.fusion,
            "tokens": {item: list(seq.tokens) for item, seq in seqs.items()},
        })
        if cfg.raw["alignment"]["enabled"]:
            pairs = fusion.make_alignment_pairs(
                ids_by_stream[roles["img"]], ids_by_stream[roles["txt"]], vocab,
                img=roles["img"], txt=roles["txt"],
            )
            _write_json(stage / "alignment_pairs.json",
                        [[list(a.tokens), list(b.tokens)] for a, b in pairs])
        _mark_stage(stage, digest)
        self.results["sequences"] = StageResult(digest, cached=False)

    def _load_sequences(self):
        stage = self.stage_dir("sequences")
        raw = _read_json(stage / "sequences.json")
        tokens = {item: tuple(t) for item, t in raw["tokens"].items()}
        pairs_path = stage / "alignment_pairs.json"
        pairs = None
        if pairs_path.exists():
            pairs = [(tuple(a), tuple(b)) for a, b in _read_json(pairs_path)]
        return tokens, pairs

    # ------------------------------------------------------------ models

    def _derived_model_config(self, vocab_size: int, item_len: int, seed: int) -> ModelConfig:
        m = self.config.raw["model"]
        ev = self.config.raw["eval"]
        max_pos = m["max_positions"] or max(ev["max_history"] * item_len, item_len + 2, 8)
        return ModelConfig(
            vocab_size=vocab_size, width=m["width"], heads=m["heads"], ff_width=m["ff_width"],
            enc_layers=m["enc_layers"], dec_layers=m["dec_layers"], max_positions=max_pos,
            dropout=m["dropout"], seed=seed,
        )

    def _run_models(self) -> None:
        self._require("sequences")
        self._current_stage = "models"
        cfg = self.config
        stage = self.stage_dir("models")
        digest = _sha256_str(
            self.results["sequences"].digest
            + cfg.section_digest("model", "train", "alignment", "eval")
        )
        if _stage_fresh(stage, digest):
            self.results["models"] = StageResult(digest, cached=True)
            return
        stage.mkdir(parents=True, exist_ok=True)
        vocab, _ = self._load_ids()
        tokens, pairs = self._load_sequences()
        _, log, split, _ = self._load_data()
        ev = cfg.raw["eval"]
        tr = cfg.raw["train"]
        instances = corpus.make_training_instances(log, split, ev["max_history"])
        catalog_tokens = {item: _SeqView(toks) for item, toks in tokens.items()}
        examples = [instance_example(inst, catalog_tokens) for inst in instances]
        item_len = len(next(iter(tokens.values())))

        for seed in ev["seeds"]:
            model = Seq2SeqModel(self._derived_model_config(vocab.size, item_len, seed))
            if cfg.raw["alignment"]["enabled"]:
                if not pairs:
                    raise ContractViolation("alignment enabled but no pairs were built")
                align_pretrain(model, [(_SeqView(a), _SeqView(b)) for a, b in pairs],
                               TrainConfig(lr=cfg.raw["alignment"]["lr"],
                                           batch_size=tr["batch_size"],
                                           steps=cfg.raw["alignment"]["steps"],
                                           clip_norm=tr["clip_norm"], seed=seed + 7919,
                                           optimizer=tr["optimizer"]))
            train(model, examples, TrainConfig(lr=tr["lr"], batch_size=tr["batch_size"],
                                               steps=tr["steps"], clip_norm=tr["clip_norm"],
                                               seed=seed, optimizer=tr["optimizer"]))
            seed_dir = stage / f"seed{seed}"
            save_model(model, seed_dir)
            save_loss_curve(model, seed_dir / "loss_curve.csv")
        _mark_stage(stage, digest)
        self.results["models"] = StageResult(digest, cached=False)

    # ------------------------------------------------------------ report

    def _run_report(self) -> None:
        self._require("models")
        self._current_stage = "report"
        cfg = self.config
        stage = self.stage_dir("report")
        digest = _sha256_str(self.results["models"].digest + cfg.section_digest("eval", "name"))
        if _stage_fresh(stage, digest):
            self.results["report"] = StageResult(digest, cached=True)
            return
        report = self._evaluate()
        _write_json(stage / "report.json", {
            "name": cfg.raw["name"],
            "fusion": cfg.fusion,
            **report.to_json(),
        })
        emit_report(report, "csv", stage / "report.csv")
        emit_report(report, "table", stage / "report.txt")
        _mark_stage(stage, digest)
        self.results["report"] = StageResult(digest, cached=False)

    def _evaluate(self) -> metrics.EvalReport:
        cfg = self.config
        ev = cfg.raw["eval"]
        tokens, _ = self._load_sequences()
        _, log, split, _ = self._load_data()
        trie = build_item_trie(tokens)
        test_instances = corpus.make_eval_instances(split, ev["max_history"], "test")
        users = sorted(test_instances)

        def run_seed(seed: int):
            model = load_model(self.stage_dir("models") / f"seed{seed}")
            out = []
            for user in users:
                inst = test_instances[user]
                ctx = [t for item in inst.history for t in tokens[item]]
                ranked = beam_decode(model, ctx, trie, beam=ev["beam"], max_len=ev["max_len"])
                items = [i for i, _ in ranked]
                if ev["filter_seen"]:
                    seen = set(inst.history)
                    items = [i for i in items if i not in seen]
                out.append((items, inst.target))
            return out

        return metrics.evaluate(run_seed, seeds=ev["seeds"], ks=ev["ks"],
                                config_digest=cfg.digest())

    def load_report(self) -> metrics.EvalReport:
        raw = _read_json(self.stage_dir("report") / "report.json")
        return metrics.EvalReport.from_json(raw)

    # ---------------------------------------------------------- geometry

    def run_geometry(self) -> Path:
        """Modality-gap / anisotropy / 2D-projection diagnostics over the two
        projected role matrices."""
        self._require("ids")
        cfg = self.config
        if cfg.fusion == "unimodal":
            raise ConfigError("geometry diagnostics need two modalities")
        roles = cfg.raw["roles"]
        stage = self.stage_dir("ids")
        m_img = read_matrix(stage / f"projected_{roles['img']}")
        m_txt = read_matrix(stage / f"projected_{roles['txt']}")
        g = metrics.geometry_stats(m_img, m_txt)
        out = self.out / "geometry"
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "stats.json", {
            "modality_gap": g.modality_gap,
            "anisotropy": g.anisotropy,
            "labels": list(g.labels),
            "n_pairs": g.n_pairs,
        })
        with open(out / "projection.csv", "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(["matrix", "row", "pc1", "pc2"])
            n_img = m_img.count
            for i, (x, y) in enumerate(g.projection):
                label = g.labels[0] if i < n_img else g.labels[1]
                w.writerow([label, i if i < n_img else i - n_img, f"{x:.6f}", f"{y:.6f}"])
        return out / "stats.json"


class _SeqView:
    """Minimal token-sequence view for instances loaded from disk."""

    __slots__ = ("tokens",)

    def __init__(self, tokens):
        self.tokens = tuple(tokens)


_DATA_NAMES = {"interactions": "interactions.tsv", "catalog": "catalog.json", "metadata": "metadata.jsonl"}


def _modality_seed(base: int, modality: str) -> int:
    import hashlib as _h

    h = _h.sha256(f"{base}:{modality}".encode()).digest()
    return int.from_bytes(h[:4], "little")


def _sha256_file(path: Path) -> str:
    import hashlib as _h

    return _h.sha256(path.read_bytes()).hexdigest()


def _sha256_str(s: str) -> str:
    import hashlib as _h

    return _h.sha256(s.encode("utf-8")).hexdigest()


# ------------------------------------------------------------ reporting


def run_experiment(config: ExperimentConfig, out_dir=None) -> metrics.EvalReport:
    """Execute the full pipeline; returns the evaluation report."""
    return Pipeline(config, out_dir=out_dir).run()


def emit_report(report: metrics.EvalReport, fmt: str, path: str | Path) -> Path:
    """Serialize a report as json, csv, or an aligned text table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.validate()
    if fmt == "json":
        _write_json(path, report.to_json())
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric", "k", "mean", "std"] + [f"seed{s}" for s in report.seeds])
            for metric in ("recall", "ndcg"):
                for k in report.ks:
                    row = [metric, k, f"{report.mean[metric][k]:.6f}", f"{report.std[metric][k]:.6f}"]
                    row += [f"{report.per_seed[s][metric][k]:.6f}" for s in report.seeds]
                    w.writerow(row)
    elif fmt == "table":
        cols = [f"{m}@{k}" for m in ("Recall", "NDCG") for k in report.ks]
        cells = []
        for c in cols:
            metric, k = c.split("@")
            mean = report.mean[metric.lower()][int(k)]
            std = report.std[metric.lower()][int(k)]
            cells.append(f"{mean:.4f} ± {std:.4f}")
        width = max(len(c) for c in cols + cells) + 2
        lines = [
            "".join(c.rjust(width) for c in [""] + cols),
            "".join(c.rjust(width) for c in ["mean"] + cells),
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return path


# --------------------------------------------------- resolution harness


def run_resolution_harness(config: ExperimentConfig, resolutions, out_dir=None) -> dict:
    """Repeat the experiment per rendering resolution and tabulate absolute
    metrics plus relative change rows against the highest resolution."""
    if "ocr_text" not in config.used_modalities:
        raise ConfigError("resolution harness needs an experiment using the ocr_text modality")
    if config.raw["modalities"].get("ocr_text", {}).get("source") != "render":
        raise ConfigError("resolution harness needs the ocr_text modality sourced from the renderer")
    resolutions = sorted({int(r) for r in resolutions}, reverse=True)
    if not resolutions:
        raise ConfigError("need at least one resolution")
    canvas = config.raw["render"]["canvas"]
    for r in resolutions:
        if r < 1 or canvas % r != 0:
            raise ConfigError(f"resolution {r} must divide the render canvas {canvas}")

    out = Path(out_dir or config.raw["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    reports: dict[int, metrics.EvalReport] = {}
    for r in resolutions:
        sub = dict(config.canonical())
        sub["render"] = dict(sub["render"])
        sub["render"]["resolution"] = r
        sub_cfg = ExperimentConfig.from_dict(sub)
        reports[r] = run_experiment(sub_cfg, out_dir=out / f"res{r}")

    ks = reports[resolutions[0]].ks
    header = [f"{m}@{k}" for m in ("Recall", "NDCG") for k in ks]
    rows = []
    ref = resolutions[0]

    def metric_values(rep):
        return [rep.mean[m][k] for m in ("recall", "ndcg") for k in ks]

    for r in resolutions:
        rows.append({"setting": str(r), "values": metric_values(reports[r])})
    for r in resolutions[1:]:
        high = metric_values(reports[ref])
        low = metric_values(reports[r])
        rel = [100.0 * (l - h) / h if h != 0 else float("nan") for h, l in zip(high, low)]
        rows.append({"setting": f"Rel. Change (%) {r} vs {ref}", "values": rel, "relative": True})

    table = {"columns": header, "rows": rows, "resolutions": resolutions}
    _write_json(out / "resolution_table.json", table)
    with open(out / "resolution_table.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["setting"] + header)
        for row in rows:
            w.writerow([row["setting"]] + [f"{v:+.2f}" if row.get("relative") else f"{v:.4f}"
                                           for v in row["values"]])
    width = max(24, max(len(r["setting"]) for r in rows) + 2)
    cw = 14
    lines = ["".join(["setting".ljust(width)] + [h.rjust(cw) for h in header])]
    for row in rows:
        cells = [f"{v:+.2f}" if row.get("relative") else f"{v:.4f}" for v in row["values"]]
        lines.append("".join([row["setting"].ljust(width)] + [c.rjust(cw) for c in cells]))
    (out / "resolution_table.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return table
