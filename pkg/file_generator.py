#!/usr/bin/env python3
"""
File Generator
Writes the result table of a run as CSV, JSON, tidy plot data and an
optional Excel workbook
"""
import os
import csv
import json
import math
from typing import Any, Dict, List, Optional, Sequence

from safe_print_utils import safe_print_global as safe_print

try:
    from openpyxl import Workbook
    from openpyxl.styles import Alignment, Font, PatternFill
    EXCEL_AVAILABLE = True
except ImportError:
    EXCEL_AVAILABLE = False

RESULT_COLUMNS = [
    "scenario", "n", "engine", "P", "P_se", "E_n", "E_n_se", "ratio", "ratio_se", "P_over_E_n",
    "rho", "B_checkpoints", "main_prediction", "tail_bound", "tail_bound_applicable",
    "lower_bound", "upper_bound", "upper_bound_valid", "normalized_P", "predicted_target", "predicted_limit",
]
TIMING_COLUMN = "runtime_ms"
PLOT_METRICS = ["P", "E_n", "ratio", "P_over_E_n", "main_prediction", "tail_bound", "normalized_P",
                "predicted_limit"]


def format_value(value: Any) -> str:
    """17 significant digits, '.' decimal, lowercase booleans, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    return str(value)


class FileGenerator:
    """
    Generates the output files of a run from its result rows
    """

    def __init__(self, include_timing: bool = False):
        self.include_timing = include_timing

    @property
    def columns(self) -> List[str]:
        return RESULT_COLUMNS + ([TIMING_COLUMN] if self.include_timing else [])

    @staticmethod
    def _ensure_parent(path: str):
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)

    def write_csv(self, rows: Sequence[Dict], output_path: str) -> str:
        """Byte-stable CSV: fixed column order, '\n' line endings."""
        self._ensure_parent(output_path)
        with open(output_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(self.columns)
            for row in rows:
                writer.writerow([format_value(row.get(col)) for col in self.columns])
        safe_print(f"[SUCCESS] CSV written: {output_path} ({len(rows)} rows)")
        return output_path

    def write_json(self, rows: Sequence[Dict], output_path: str, run_spec: Optional[Dict] = None) -> str:
        self._ensure_parent(output_path)
        payload = {
            "run_spec": run_spec,
            "rows": [{col: self._json_value(row.get(col)) for col in self.columns} for row in rows],
        }
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=False)
            f.write("\n")
        safe_print(f"[SUCCESS] JSON written: {output_path}")
        return output_path

    @staticmethod
    def _json_value(value: Any) -> Any:
        if isinstance(value, float) and not math.isfinite(value):
            return None
        if isinstance(value, tuple):
            return list(value)
        return value

    def write_plot_data(self, rows: Sequence[Dict], output_path: str) -> str:
        """Tidy long format: one line per (scenario, n, engine, metric)."""
        self._ensure_parent(output_path)
        with open(output_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(["scenario", "n", "engine", "metric", "value"])
            for row in rows:
                for metric in PLOT_METRICS:
                    value = row.get(metric)
                    if value is None:
                        continue
                    writer.writerow([row["scenario"], row["n"], row["engine"], metric, format_value(value)])
        safe_print(f"[SUCCESS] Plot data written: {output_path}")
        return output_path

    def write_excel(self, rows: Sequence[Dict], output_path: str) -> Optional[str]:
        """Result table as a single formatted sheet."""
        if not EXCEL_AVAILABLE:
            safe_print("[WARNING] openpyxl not available - skipping Excel output")
            return None
        self._ensure_parent(output_path)
        wb = Workbook()
        ws = wb.active
        ws.title = "Results"

        header_font = Font(bold=True, color="FFFFFF")
        header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")

        for col_idx, column in enumerate(self.columns, 1):
            cell = ws.cell(row=1, column=col_idx, value=column)
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = Alignment(horizontal='center', vertical='center')

        for row_idx, row in enumerate(rows, 2):
            for col_idx, column in enumerate(self.columns, 1):
                value = row.get(column)
                if isinstance(value, (list, tuple)):
                    value = format_value(value)
                elif isinstance(value, float) and not math.isfinite(value):
                    value = None
                ws.cell(row=row_idx, column=col_idx, value=value)

        for col_idx, column in enumerate(self.columns, 1):
            column_letter = ws.cell(row=1, column=col_idx).column_letter
            ws.column_dimensions[column_letter].width = max(len(column) + 2, 12)

        wb.save(output_path)
        safe_print(f"[SUCCESS] Excel file generated: {output_path}")
        return output_path

    def write_all(self, rows: Sequence[Dict], outputs: Dict[str, str], run_spec: Optional[Dict] = None) -> Dict[str, str]:
        written = {}
        if outputs.get("csv"):
            written["csv"] = self.write_csv(rows, outputs["csv"])
        if outputs.get("json"):
            written["json"] = self.write_json(rows, outputs["json"], run_spec)
        if outputs.get("plot_data"):
            written["plot_data"] = self.write_plot_data(rows, outputs["plot_data"])
        if outputs.get("xlsx"):
            path = self.write_excel(rows, outputs["xlsx"])
            if path:
                written["xlsx"] = path
        return written
