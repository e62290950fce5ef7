"""
Reporting Package
"""

from .html_generator import generate_html_report, write_html_report
from .tables import (
    GRID_COLUMNS,
    LOSS_COLUMNS,
    confusion_frame,
    export_workbook,
    grid_table,
    loss_history_frame,
    norms_frame,
    steps_table,
    write_confusion,
    write_json_report,
    write_loss_history,
    write_norms,
    write_table,
)

__all__ = [
    'generate_html_report',
    'write_html_report',
    'GRID_COLUMNS',
    'LOSS_COLUMNS',
    'confusion_frame',
    'export_workbook',
    'grid_table',
    'loss_history_frame',
    'norms_frame',
    'steps_table',
    'write_confusion',
    'write_json_report',
    'write_loss_history',
    'write_norms',
    'write_table',
]
