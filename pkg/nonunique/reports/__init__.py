"""
Report emission and field dumps.
"""

from nonunique.reports.serialize import (
    emit_report,
    mask_runs,
    to_primitive,
    write_cloud_csv,
    write_field_csv,
    write_mask_rle_csv,
    write_report,
)
from nonunique.reports.wcif import read_wcif, write_wcif

__all__ = [
    "emit_report",
    "mask_runs",
    "read_wcif",
    "to_primitive",
    "write_cloud_csv",
    "write_field_csv",
    "write_mask_rle_csv",
    "write_report",
    "write_wcif",
]
