import csv

import pytest

import satrestore.db as db_module
from satrestore.cli import main
from satrestore.errors import StageError
from satrestore.images import load_image
from satrestore.metrics import psnr
from satrestore.pipeline import Pipeline
from tests.conftest import DEFAULT_SPEC_PSNR_BAND

TINY = """\
base_width = 4
depth = 2
patch_size = 16
ddn_iterations = 3
restore_epochs = 2
n_alpha = 3
checkpoint_every = 2
log_every = 1
"""


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("SATRESTORE_OUTPUT_ROOT", raising=False)
    monkeypatch.delenv("SATRESTORE_SEED", raising=False)


def _write_config(directory, output_dir="out", images="data", extra="", omit=()):
    lines = [TINY, f'output_dir = "{output_dir}"']
    for key, name in (("reference", "reference.png"), ("distorted", "distorted.png"),
                      ("ground_truth", "ground_truth.png")):
        if key not in omit:
            lines.append(f'{key} = "{images}/{name}"')
    path = directory / "config.toml"
    path.write_text("\n".join(lines) + "\n" + extra, encoding="utf-8")
    return path


def _exit_code(argv) -> int:
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    """Validation triple from the procedural scene, shared by the pipeline tests."""
    out = tmp_path_factory.mktemp("data")
    main(["--config", str(out / "absent.toml"), "synth", "--out", str(out)])
    return out


# --- synth ---

def test_synth_aligned_offset_reference_equals_ground_truth(tmp_path):
    main(["--config", str(tmp_path / "absent.toml"), "synth",
          "--offset", "0", "0", "--out", str(tmp_path)])
    assert (tmp_path / "reference.png").read_bytes() == (tmp_path / "ground_truth.png").read_bytes()
    assert (tmp_path / "degradation.txt").exists()


def test_synth_same_seed_byte_identical(tmp_path, data_dir):
    main(["--config", str(tmp_path / "absent.toml"), "synth", "--out", str(tmp_path)])
    for name in ("reference.png", "distorted.png", "ground_truth.png"):
        assert (tmp_path / name).read_bytes() == (data_dir / name).read_bytes()


def test_synth_default_spec_psnr_band(data_dir):
    value = psnr(load_image(data_dir / "distorted.png"), load_image(data_dir / "ground_truth.png"))
    low, high = DEFAULT_SPEC_PSNR_BAND
    assert low <= value <= high


def test_synth_degrade_flag(tmp_path):
    main(["--config", str(tmp_path / "absent.toml"), "synth",
          "--degrade", "haze t=1", "--offset", "0", "0", "--out", str(tmp_path)])
    assert (tmp_path / "distorted.png").read_bytes() == (tmp_path / "ground_truth.png").read_bytes()
    assert 'degrade = "haze t=1.0"' in (tmp_path / "degradation.txt").read_text()


def test_synth_bad_degrade_is_config_error(tmp_path, capsys):
    code = _exit_code(["--config", str(tmp_path / "absent.toml"), "synth",
                       "--degrade", "sepia", "--out", str(tmp_path)])
    assert code == 2
    assert "sepia" in capsys.readouterr().err


# --- stage errors ---

def test_missing_distorted_path_exit_2(tmp_path, data_dir, capsys):
    config = _write_config(tmp_path, images=str(data_dir), omit=("distorted",))
    assert _exit_code(["--config", str(config), "train-ddn"]) == 2
    assert "distorted" in capsys.readouterr().err


def test_missing_config_file_exit_2(tmp_path):
    assert _exit_code(["--config", str(tmp_path / "absent.toml"), "run"]) == 2


def test_transfer_without_checkpoint_exit_3(tmp_path, data_dir, capsys):
    config = _write_config(tmp_path, images=str(data_dir))
    assert _exit_code(["--config", str(config), "transfer"]) == 3
    err = capsys.readouterr().err
    assert "[transfer]" in err
    assert "missing prerequisite artifact" in err
    assert "manifest.json" in err


def test_non_integer_seed_env_exit_2(tmp_path, data_dir, monkeypatch, capsys):
    config = _write_config(tmp_path, images=str(data_dir))
    monkeypatch.setenv("SATRESTORE_SEED", "abc")
    assert _exit_code(["--config", str(config), "train-ddn"]) == 2
    assert "SATRESTORE_SEED" in capsys.readouterr().err


def test_unwritable_output_dir_exit_3(tmp_path, data_dir, capsys):
    (tmp_path / "blocker").write_text("not a directory", encoding="utf-8")
    config = _write_config(tmp_path, output_dir="blocker/out", images=str(data_dir))
    assert _exit_code(["--config", str(config), "train-ddn"]) == 3
    assert "[ddn]" in capsys.readouterr().err


def test_unknown_stage_rejected(tiny_cfg):
    pipeline = Pipeline(tiny_cfg)
    with pytest.raises(StageError, match="unknown stage"):
        pipeline.run_stage("sharpen")
    assert pipeline.run_id is None


def test_indivisible_patch_size_exit_2(tmp_path, data_dir, capsys):
    config = _write_config(tmp_path, images=str(data_dir))
    assert _exit_code(["--config", str(config), "--set", "patch_size=18", "train-ddn"]) == 2
    assert "patch_size" in capsys.readouterr().err


# --- full and staged runs ---

@pytest.fixture(scope="module")
def full_run(tmp_path_factory, data_dir):
    root = tmp_path_factory.mktemp("full")
    config = _write_config(root, images=str(data_dir))
    main(["--config", str(config), "run"])
    return root


def test_full_run_outputs(full_run):
    out = full_run / "out"
    for rel in ("restored.png", "evaluation.csv", "report.html", "run_manifest.txt", "runs.db",
                "ddn/ddn_loss.csv", "ddn/final/manifest.json", "dataset/manifest.txt",
                "dataset/sweep.png", "restoration/restore_loss.csv"):
        assert (out / rel).exists(), rel
    assert load_image(out / "restored.png").shape == (3, 240, 240)


def test_evaluate_csv_has_image_and_aggregate_rows(full_run):
    with open(full_run / "out" / "evaluation.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["image"] for r in rows] == ["restored.png", "mean"]
    assert rows[0]["psnr_db"] == rows[1]["psnr_db"]


def test_run_manifest_and_ledger(full_run):
    out = full_run / "out"
    text = (out / "run_manifest.txt").read_text()
    assert text.startswith("config_hash = ")
    assert "seed = 0" in text
    assert "restored.png" in text

    conn = db_module.connect(out / "runs.db")
    try:
        run = db_module.latest_run(conn)
        state = db_module.get_pipeline_state(conn, run["id"])
        stages = [r["stage"] for r in db_module.get_stages(conn, run["id"])]
    finally:
        conn.close()
    assert state.stage == "evaluate"
    assert stages == ["ddn", "transfer", "distill", "restore", "evaluate"]
    assert "restored.png" in state.artifacts


def test_staged_run_matches_full_run(tmp_path, data_dir, full_run):
    config = _write_config(tmp_path, images=str(data_dir))
    for command in ("train-ddn", "transfer", "train-restore", "restore", "evaluate"):
        main(["--config", str(config), command])
    restored = (tmp_path / "out" / "restored.png").read_bytes()
    assert restored == (full_run / "out" / "restored.png").read_bytes()


def test_rerun_is_deterministic(tmp_path, data_dir, full_run):
    config = _write_config(tmp_path, images=str(data_dir))
    main(["--config", str(config), "run"])
    restored = (tmp_path / "out" / "restored.png").read_bytes()
    assert restored == (full_run / "out" / "restored.png").read_bytes()


def test_config_change_mid_run_rejected(full_run, capsys):
    config = full_run / "config.toml"
    code = _exit_code(["--config", str(config), "--set", "seed=5", "restore"])
    assert code == 3
    assert "config changed" in capsys.readouterr().err


def test_run_without_ground_truth_skips_evaluation(tmp_path, data_dir, capsys):
    config = _write_config(tmp_path, images=str(data_dir), omit=("ground_truth",))
    main(["--config", str(config), "run"])
    assert (tmp_path / "out" / "restored.png").exists()
    assert not (tmp_path / "out" / "evaluation.csv").exists()
    assert "skipping evaluation" in capsys.readouterr().out


def test_from_scratch_baseline_written_separately(tmp_path, data_dir):
    config = _write_config(tmp_path, images=str(data_dir))
    main(["--config", str(config), "train-ddn"])
    main(["--config", str(config), "transfer"])
    main(["--config", str(config), "train-restore", "--from-scratch"])
    assert (tmp_path / "out" / "restoration_scratch" / "final" / "manifest.json").exists()
    assert not (tmp_path / "out" / "restoration").exists()
