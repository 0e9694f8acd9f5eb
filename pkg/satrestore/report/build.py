import csv
from datetime import date
from pathlib import Path

from jinja2 import Environment, FileSystemLoader, select_autoescape

from satrestore.models import EvalReport, EvalRow

_TEMPLATES = Path(__file__).parent / "templates"


def _row_to_dict(row: EvalRow) -> dict:
    return {
        "image": row.image,
        "psnr_db": f"{row.psnr_db:.2f}",
        "ssim": f"{row.ssim:.4f}",
        "capped": row.capped,
    }


def summarize_loss_log(path: Path) -> dict | None:
    """First and last value of every column of a loss CSV, keyed by column name."""
    if not path.exists():
        return None
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return None
    step_key = next(iter(rows[0]))
    return {
        "name": path.name,
        "steps": len(rows),
        "columns": [
            {"name": key, "first": float(rows[0][key]), "last": float(rows[-1][key])}
            for key in rows[0]
            if key != step_key
        ],
    }


def build_report(
    output_dir: Path,
    report: EvalReport,
    baseline: EvalRow | None,
    loss_logs: list[Path],
    manifest_text: str,
) -> Path:
    """Render report.html: restoration scores, the unrestored baseline, loss summaries, manifest."""
    env = Environment(
        loader=FileSystemLoader(_TEMPLATES),
        autoescape=select_autoescape(["html"]),
    )
    env.globals["generated_date"] = date.today().isoformat()

    rows = [_row_to_dict(r) for r in report.rows]
    gain = None
    if baseline is not None and report.rows:
        restored = report.rows[0]
        gain = {
            "psnr_db": f"{restored.psnr_db - baseline.psnr_db:+.2f}",
            "ssim": f"{restored.ssim - baseline.ssim:+.4f}",
        }

    dest = output_dir / "report.html"
    _render(env, "report.html", dest, {
        "rows": rows,
        "aggregate": _row_to_dict(report.aggregate()),
        "baseline": _row_to_dict(baseline) if baseline else None,
        "gain": gain,
        "losses": [s for s in (summarize_loss_log(p) for p in loss_logs) if s],
        "manifest": manifest_text,
    })
    return dest


def _render(env: Environment, template_name: str, dest: Path, context: dict) -> None:
    template = env.get_template(template_name)
    dest.write_text(template.render(**context), encoding="utf-8")
