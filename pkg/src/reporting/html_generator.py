"""
HTML Run Report using Jinja2 & Tailwind CSS
Metric cards per protocol, diagnostics, confusion matrix, head norms and
the loss history of a run, rendered into a single self-contained page.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd
from jinja2 import Template

from ..evaluation import PROTOCOLS, EvalReport
from ..utils import format_percent
from .tables import loss_history_frame, norms_frame

logger = logging.getLogger(__name__)

HTML_TEMPLATE = """
<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <meta name="viewport" content="width=device-width, initial-scale=1.0">
    <title>{{ report_title }}</title>
    <script src="https://cdn.tailwindcss.com"></script>
    <style>
        :root {
            --run-bg: #f8fafc;
            --run-card: #ffffff;
            --run-border: #e2e8f0;
            --run-text: #1e293b;
            --run-text-sub: #4e5968;
            --run-text-muted: #94a3b8;
            --run-accent: #3182f6;
        }
        body { background: var(--run-bg); color: var(--run-text); }
        .card { background: var(--run-card); border: 1px solid var(--run-border); border-radius: 16px; }
        td, th { padding: 4px 8px; text-align: right; font-variant-numeric: tabular-nums; }
        th { color: var(--run-text-sub); font-weight: 700; }
        .diag { background: #dbeafe; }
    </style>
</head>
<body class="font-sans">
<main class="max-w-5xl mx-auto p-8 space-y-8">
    <header>
        <h1 class="text-4xl font-black tracking-tight mb-2">{{ report_title }}</h1>
        <p class="text-lg" style="color: var(--run-text-sub);">{{ subtitle }}</p>
    </header>

    {% for card in protocol_cards %}
    <section class="card p-6">
        <h2 class="text-lg font-bold mb-4">{{ card.protocol }}</h2>
        <div class="grid grid-cols-3 gap-4">
            {% for metric in card.metrics %}
            <div class="p-4 rounded-xl border" style="border-color: var(--run-border);">
                <p class="text-xs font-bold uppercase" style="color: var(--run-text-muted);">{{ metric.label }}</p>
                <p class="text-2xl font-bold">{{ metric.value }}</p>
            </div>
            {% endfor %}
        </div>
        <p class="text-sm mt-3" style="color: var(--run-text-muted);">{{ card.counts }}</p>
    </section>
    {% endfor %}

    {% if diagnostics %}
    <section class="card p-6">
        <h2 class="text-lg font-bold mb-2">Diagnostics</h2>
        <p class="mb-3">{{ diagnostics.summary }}</p>
        <table class="mb-4">
            {% for label, value in diagnostics.key_metrics.items() %}
            <tr><th class="text-left">{{ label }}</th><td>{{ value }}</td></tr>
            {% endfor %}
        </table>
        {% if diagnostics.insights %}
        <ul class="list-disc pl-6 mb-3">
            {% for line in diagnostics.insights %}<li>{{ line }}</li>{% endfor %}
        </ul>
        {% endif %}
        {% if diagnostics.recommendations %}
        <h3 class="font-bold mb-1">Suggested checks</h3>
        <ul class="list-disc pl-6">
            {% for line in diagnostics.recommendations %}<li>{{ line }}</li>{% endfor %}
        </ul>
        {% endif %}
    </section>
    {% endif %}

    {% if confusion %}
    <section class="card p-6 overflow-x-auto">
        <h2 class="text-lg font-bold mb-2">Confusion matrix ({{ confusion.protocol }})</h2>
        <p class="text-sm mb-3" style="color: var(--run-text-muted);">rows: true class, columns: predicted class</p>
        <table class="text-sm">
            <tr><th></th>{% for j in confusion.columns %}<th>{{ j }}</th>{% endfor %}</tr>
            {% for row in confusion.rows %}
            {% set i = loop.index0 %}
            <tr><th>{{ i }}</th>{% for cell in row %}<td{% if loop.index0 == i %} class="diag"{% endif %}>{{ cell }}</td>{% endfor %}</tr>
            {% endfor %}
        </table>
    </section>
    {% endif %}

    {% if norms %}
    <section class="card p-6">
        <h2 class="text-lg font-bold mb-2">Head weight norms</h2>
        <table class="text-sm">
            <tr><th>class</th><th>norm</th><th>block</th></tr>
            {% for row in norms %}
            <tr><td>{{ row['class'] }}</td><td>{{ '%.4f'|format(row['norm']) }}</td><td>{{ row['block'] }}</td></tr>
            {% endfor %}
        </table>
    </section>
    {% endif %}

    {% for table in tables %}
    <section class="card p-6 overflow-x-auto">
        <h2 class="text-lg font-bold mb-2">{{ table.title }}</h2>
        <table class="text-sm">
            <tr>{% for column in table.columns %}<th>{{ column }}</th>{% endfor %}</tr>
            {% for row in table.rows %}
            <tr>{% for cell in row %}<td>{{ cell }}</td>{% endfor %}</tr>
            {% endfor %}
        </table>
    </section>
    {% endfor %}
</main>
</body>
</html>
"""


def _protocol_card(report: EvalReport) -> Dict[str, Any]:
    return {
        'protocol': report.protocol,
        'metrics': [
            {'label': 'Old', 'value': format_percent(report.old_acc)},
            {'label': 'New', 'value': format_percent(report.new_acc)},
            {'label': 'All', 'value': format_percent(report.all_acc)},
        ],
        'counts': f"{report.n_old} old-class and {report.n_new} new-class test samples; "
                  f"{report.num_old} old and {report.num_new} new classes",
    }


def _confusion_data(report: EvalReport) -> Dict[str, Any]:
    matrix = report.confusion.astype(int)
    rows = [[int(v) for v in row] for row in matrix]
    return {'protocol': report.protocol, 'columns': list(range(matrix.shape[1])), 'rows': rows}


def _cell(value: Any, percent: bool) -> str:
    if isinstance(value, float):
        return format_percent(value) if percent else f"{value:.5f}"
    return str(value)


def _table_data(title: str, df: pd.DataFrame, percent: bool = False) -> Dict[str, Any]:
    return {
        'title': title,
        'columns': list(df.columns),
        'rows': [[_cell(v, percent) for v in row] for row in df.itertuples(index=False, name=None)],
    }


def generate_html_report(
    reports: Mapping[str, EvalReport],
    history: Sequence = (),
    diagnostics: Optional[Dict[str, Any]] = None,
    title: str = "Discovery run report",
    subtitle: str = "",
    tables: Optional[Mapping[str, pd.DataFrame]] = None,
) -> str:
    """
    Render reports (protocol -> EvalReport), the loss history records of the
    run and an analyze_eval_report() result. Extra tables such as the grid
    or steps table are rendered with their accuracies as percentages.
    """
    ordered = [reports[p] for p in PROTOCOLS if p in reports]
    primary = ordered[0] if ordered else None

    rendered_tables: List[Dict[str, Any]] = [
        _table_data(name, df, percent=True) for name, df in (tables or {}).items()
    ]
    losses = loss_history_frame(history) if history else pd.DataFrame()
    if not losses.empty:
        rendered_tables.append(_table_data("Loss history", losses))

    template = Template(HTML_TEMPLATE)
    return template.render(
        report_title=title,
        subtitle=subtitle,
        protocol_cards=[_protocol_card(r) for r in ordered],
        diagnostics=diagnostics or {},
        confusion=_confusion_data(primary) if primary is not None else None,
        norms=norms_frame(primary.head_norms, primary.num_old).to_dict('records') if primary is not None else [],
        tables=rendered_tables,
    )


def write_html_report(path: Union[str, Path], *args, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(generate_html_report(*args, **kwargs), encoding="utf-8")
    logger.info("wrote %s", path)
    return path
