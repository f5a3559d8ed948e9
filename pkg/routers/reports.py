import csv
import math
from io import StringIO
from typing import List, Optional

import click

from db.base import atomic_write_text
from db.db import read_json
from routers.common import handle_errors

COLUMNS = ["group", "pairs", "failed", "inlier_mean", "inlier_std", "trans_mean_m", "trans_std_m", "rot_mean_deg", "rot_std_deg"]


def _num(value: Optional[float], scale: float = 1.0) -> str:
    return "-" if value is None else f"{value * scale:.4f}"


def report_rows(metrics: dict) -> List[List[str]]:
    rows = []
    for group in ("small", "large", "all"):
        agg = metrics.get("aggregate", {}).get(group)
        if agg is None:
            continue
        deg = 180.0 / math.pi
        rows.append(
            [
                group,
                str(agg["pairs"]),
                str(agg["failed"]),
                _num(agg["inlier_ratio"]["mean"]),
                _num(agg["inlier_ratio"]["std"]),
                _num(agg["translation_error"]["mean"]),
                _num(agg["translation_error"]["std"]),
                _num(agg["rotation_error"]["mean"], deg),
                _num(agg["rotation_error"]["std"], deg),
            ]
        )
    return rows


def render_table(rows: List[List[str]]) -> str:
    widths = [max(len(COLUMNS[i]), *(len(r[i]) for r in rows)) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(COLUMNS, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(line.rstrip() for line in lines)


@click.command("report")
@click.option("--metrics", "metrics_path", required=True, help="Metrics JSON written by `eval`.")
@click.option("--csv", "csv_path", default=None, help="Also write the table as CSV.")
@handle_errors
def report(metrics_path: str, csv_path: Optional[str]):
    """Print (mean, std) per variation group."""
    rows = report_rows(read_json(metrics_path))
    click.echo(render_table(rows))
    if csv_path:
        output = StringIO()
        writer = csv.writer(output, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
        atomic_write_text(csv_path, output.getvalue())
