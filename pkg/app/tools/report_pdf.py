from fpdf import FPDF
from fpdf.enums import XPos, YPos
from typing import Dict, Any, List
from pathlib import Path
import re


class SimplePDF(FPDF):
    def header(self):
        self.set_font("Helvetica", "B", 12)
        self.cell(0, 10, "RESMatch Sweep Report", align="C", new_x=XPos.LMARGIN, new_y=YPos.NEXT)
        self.ln(2)

    def footer(self):
        self.set_y(-15)
        self.set_font("Helvetica", "I", 8)
        self.cell(0, 10, f"Page {self.page_no()}", align="C")


def _clean_text(text: str) -> str:
    """Replace or remove characters the core fonts (Latin-1) can't render"""
    text = text.replace("λ", "lambda").replace("τ", "tau")
    text = text.replace("–", "-")
    text = text.replace("…", "...")
    return re.sub(r"[^\x00-\x7F]+", "", text)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return "nan" if value != value else f"{value:.4f}"
    return str(value)


def _add_table(pdf: FPDF, title: str, rows: List[Dict[str, Any]], columns: List[str]):
    pdf.set_font("Helvetica", "B", 11)
    pdf.cell(0, 8, _clean_text(title), new_x=XPos.LMARGIN, new_y=YPos.NEXT)
    pdf.set_font("Helvetica", size=9)
    col_w = max(25, int(pdf.epw / max(1, len(columns))))
    # header
    for c in columns:
        pdf.cell(col_w, 7, _clean_text(str(c)), border=1)
    pdf.ln()
    # rows
    for r in rows:
        for c in columns:
            pdf.cell(col_w, 7, _clean_text(_fmt(r.get(c, ""))[:32]), border=1)
        pdf.ln()
    pdf.ln(4)


def generate_sweep_report(
    title: str,
    config_echo: Dict[str, Any],
    rows: List[Dict[str, Any]],
    aggregate: List[Dict[str, Any]],
    out_path: Path,
) -> Path:
    """Per-run oIoU table, per-ratio aggregate and the config the sweep ran under."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    pdf = SimplePDF()
    pdf.add_page()
    pdf.set_font("Helvetica", "B", 14)
    pdf.multi_cell(0, 8, _clean_text(title), new_x=XPos.LMARGIN, new_y=YPos.NEXT)
    pdf.ln(2)
    if rows:
        _add_table(pdf, "Runs", rows, list(rows[0].keys()))
    if aggregate:
        _add_table(pdf, "oIoU by label ratio", aggregate, list(aggregate[0].keys()))
    settings = [{"setting": k, "value": v} for k, v in sorted(config_echo.items())]
    _add_table(pdf, "Configuration", settings, ["setting", "value"])
    pdf.output(str(out_path))
    return out_path
