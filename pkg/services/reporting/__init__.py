from services.reporting.render import render_cell
from services.reporting.report import emit_report, read_csv, sweep_from_summary, tables_from_summary, write_csv, write_summary

__all__ = ["emit_report", "read_csv", "render_cell", "sweep_from_summary", "tables_from_summary", "write_csv", "write_summary"]
