"""
Stage orchestration over an output directory.

    output_dir/
        reference.png, distorted.png, ground_truth.png   (synth)
        ddn/ddn_loss.csv, ddn/final/, ddn/checkpoints/   (ddn)
        dataset/pairs/alpha_<k>.png, clean.png, manifest.txt, sweep.png  (transfer)
        restoration/restore_loss.csv, restoration/final/ (distill)
        restored.png                                     (restore)
        evaluation.csv, report.html                      (evaluate)
        runs.db, run_manifest.txt

Every stage reads its inputs from disk, so running the stages one by one gives
the same files as a full run.
"""

import logging
import sqlite3
import time
from datetime import datetime
from pathlib import Path
from typing import Callable

import satrestore.config as cfg_module
import satrestore.db as db_module
from satrestore.checkpoint import MANIFEST_NAME, file_sha256
from satrestore.ddn import FINAL_DIR, LOSS_LOG_NAME, DDNBundle, train_ddn
from satrestore.degradations import format_spec, make_validation_pair, parse_spec
from satrestore.degradations.fixture import aerial_scene
from satrestore.errors import SatRestoreError, StageError
from satrestore.images import load_image, save_image
from satrestore.metrics import evaluate, psnr, ssim, write_report_csv
from satrestore.models import STAGES, EvalRow, RunConfig
from satrestore.report.build import build_report
from satrestore.restoration import LOSS_LOG_NAME as RESTORE_LOG_NAME
from satrestore.restoration import RestorationNet, restore, train_restoration
from satrestore.transfer import MANIFEST_NAME as DATASET_MANIFEST
from satrestore.transfer import generate_kd_dataset, load_kd_dataset

log = logging.getLogger(__name__)

DDN_DIR = "ddn"
DATASET_DIR = "dataset"
RESTORE_DIR = "restoration"
SCRATCH_DIR = "restoration_scratch"
RESTORED_NAME = "restored.png"
EVAL_CSV = "evaluation.csv"
RUN_MANIFEST = "run_manifest.txt"
LEDGER = "runs.db"
SYNTH_NAMES = ("reference.png", "distorted.png", "ground_truth.png")

# Stages that may open a new run; later stages must match the open run's config
_RUN_OPENERS = ("synth", "ddn")
# Stages executed by a full run, in order
RUN_SEQUENCE = ("ddn", "transfer", "distill", "restore", "evaluate")


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = cfg_module.get_output_dir(cfg)
        self.config_hash = cfg_module.config_hash(cfg)
        self._conn = None
        self.run_id: int | None = None

    @property
    def conn(self):
        if self._conn is None:
            self._conn = db_module.connect(self.out / LEDGER)
        return self._conn

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    # --- Run bookkeeping ---

    def _attach(self, stage: str) -> None:
        latest = db_module.latest_run(self.conn)
        if latest is not None and latest["config_hash"] == self.config_hash:
            self.run_id = latest["id"]
        elif stage in _RUN_OPENERS or latest is None:
            self.run_id = db_module.begin_run(self.conn, self.config_hash, self.cfg.seed)
        else:
            raise StageError(
                stage, "config changed since the last run; rerun from train-ddn"
            )

    def _require(self, stage: str, *relpaths: str) -> None:
        for rel in relpaths:
            if not (self.out / rel).exists():
                raise StageError(stage, f"missing prerequisite artifact {self.out / rel}")

    def _record_failure(self, stage: str, started: str, t0: float, exc: Exception) -> None:
        if self.run_id is None:
            return
        try:
            db_module.upsert_stage(self.conn, self.run_id, stage, "failed", started,
                                   time.perf_counter() - t0, str(exc))
        except (OSError, sqlite3.Error) as ledger_exc:
            log.warning("could not record failure of stage %s: %s", stage, ledger_exc)

    def run_stage(self, stage: str, **kwargs) -> None:
        """Run one stage, recording timing, status and artifact checksums in the ledger."""
        if stage not in STAGES:
            raise StageError(stage, f"unknown stage; expected one of {', '.join(STAGES)}")
        handler: Callable[..., list[str]] = getattr(self, f"_stage_{stage}")
        started = datetime.now().isoformat(timespec="seconds")
        t0 = time.perf_counter()
        try:
            self._attach(stage)
            artifacts = handler(**kwargs)
        except StageError as exc:
            self._record_failure(stage, started, t0, exc)
            raise
        except (SatRestoreError, ValueError, RuntimeError, OSError, sqlite3.Error) as exc:
            self._record_failure(stage, started, t0, exc)
            code = getattr(exc, "exit_code", 3)
            raise StageError(stage, str(exc), exit_code=code) from exc

        seconds = time.perf_counter() - t0
        try:
            for rel in artifacts:
                db_module.upsert_artifact(self.conn, self.run_id, stage, rel,
                                          file_sha256(self.out / rel))
            db_module.upsert_stage(self.conn, self.run_id, stage, "ok", started, seconds)
            self.write_run_manifest()
        except (OSError, sqlite3.Error) as exc:
            raise StageError(stage, f"cannot record stage results: {exc}") from exc
        log.info("stage %s finished in %.1fs", stage, seconds)

    def write_run_manifest(self) -> Path:
        run = db_module.get_run(self.conn, self.run_id)
        lines = [
            f"config_hash = {run['config_hash']}",
            f"seed = {run['seed']}",
            f"run_id = {run['id']}",
            f"started = {run['started']}",
            "",
            "[stages]",
        ]
        for row in db_module.get_stages(self.conn, self.run_id):
            lines.append(f"{row['stage']:<10} {row['status']:<7} {row['seconds']:9.2f}s  {row['started']}")
        lines += ["", "[artifacts]"]
        for path, digest in db_module.get_artifacts(self.conn, self.run_id).items():
            lines.append(f"{digest}  {path}")
        dest = self.out / RUN_MANIFEST
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return dest

    # --- Stages ---

    def _stage_synth(self, clean_path: Path | None = None) -> list[str]:
        spec = parse_spec(self.cfg.degrade, seed=self.cfg.seed)
        clean = load_image(clean_path) if clean_path else aerial_scene(256, seed=self.cfg.seed)
        images = make_validation_pair(clean, spec, offset=(self.cfg.offset_y, self.cfg.offset_x))
        for name, img in zip(SYNTH_NAMES, images):
            save_image(img, self.out / name)

        record = self.out / "degradation.txt"
        record.write_text(
            f'degrade = "{format_spec(spec)}"\n'
            f"seed = {self.cfg.seed}\n"
            f"offset_y = {self.cfg.offset_y}\n"
            f"offset_x = {self.cfg.offset_x}\n"
            f'clean = "{clean_path or "procedural"}"\n',
            encoding="utf-8",
        )
        return [*SYNTH_NAMES, record.name]

    def _stage_ddn(self) -> list[str]:
        reference = load_image(cfg_module.require_path(self.cfg, "reference"))
        distorted = load_image(cfg_module.require_path(self.cfg, "distorted"))
        train_ddn(reference, distorted, self.cfg, out_dir=self.out / DDN_DIR)
        return [f"{DDN_DIR}/{LOSS_LOG_NAME}", f"{DDN_DIR}/{FINAL_DIR}/{MANIFEST_NAME}"]

    def _stage_transfer(self) -> list[str]:
        self._require("transfer", f"{DDN_DIR}/{FINAL_DIR}/{MANIFEST_NAME}")
        reference = load_image(cfg_module.require_path(self.cfg, "reference"))
        distorted = load_image(cfg_module.require_path(self.cfg, "distorted"))
        bundle = DDNBundle.load(self.out / DDN_DIR / FINAL_DIR)
        pairs = generate_kd_dataset(bundle, reference, distorted, self.cfg, self.out / DATASET_DIR)
        return [
            f"{DATASET_DIR}/{DATASET_MANIFEST}",
            f"{DATASET_DIR}/clean.png",
            *(f"{DATASET_DIR}/pairs/alpha_{p.alpha}.png" for p in pairs),
        ]

    def _stage_distill(self, from_scratch: bool = False) -> list[str]:
        self._require(
            "distill",
            f"{DDN_DIR}/{FINAL_DIR}/{MANIFEST_NAME}",
            f"{DATASET_DIR}/{DATASET_MANIFEST}",
        )
        bundle = DDNBundle.load(self.out / DDN_DIR / FINAL_DIR)
        dataset = load_kd_dataset(self.out / DATASET_DIR)
        target = SCRATCH_DIR if from_scratch else RESTORE_DIR
        train_restoration(bundle, dataset, self.cfg, out_dir=self.out / target,
                          from_scratch=from_scratch)
        return [f"{target}/{RESTORE_LOG_NAME}", f"{target}/{FINAL_DIR}/{MANIFEST_NAME}"]

    def _stage_restore(self) -> list[str]:
        self._require("restore", f"{RESTORE_DIR}/{FINAL_DIR}/{MANIFEST_NAME}")
        distorted = load_image(cfg_module.require_path(self.cfg, "distorted"))
        net = RestorationNet.load(self.out / RESTORE_DIR / FINAL_DIR)
        save_image(restore(net, distorted), self.out / RESTORED_NAME)
        return [RESTORED_NAME]

    def _stage_evaluate(self) -> list[str]:
        self._require("evaluate", RESTORED_NAME)
        ground_truth = load_image(cfg_module.require_path(self.cfg, "ground_truth"))
        distorted = load_image(cfg_module.require_path(self.cfg, "distorted"))
        restored = load_image(self.out / RESTORED_NAME)

        report = evaluate({RESTORED_NAME: restored}, ground_truth)
        write_report_csv(report, self.out / EVAL_CSV)
        baseline = EvalRow("distorted", psnr(distorted, ground_truth), ssim(distorted, ground_truth))
        build_report(
            self.out,
            report,
            baseline,
            [self.out / DDN_DIR / LOSS_LOG_NAME, self.out / RESTORE_DIR / RESTORE_LOG_NAME],
            (self.out / RUN_MANIFEST).read_text(encoding="utf-8")
            if (self.out / RUN_MANIFEST).exists() else "",
        )
        return [EVAL_CSV]
