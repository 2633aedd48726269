import csv
import json
import logging
import os
from dataclasses import asdict

import numpy as np
from PIL import Image, ImageDraw

from .config import dump_config
from .metrics import CSV_FIELDS
from .models import ScenarioConfig
from .network import RunReport

logger = logging.getLogger(__name__)

CONFORMANCE_FIELDS = ["element", "rate_bps", "bucket_bits", "departures", "worst_excess_bits", "passed"]
COUNTER_FIELDS = [
    "time_ns", "element", "flow", "offered_frames", "offered_bytes", "accepted_frames", "accepted_bytes",
    "departed_frames", "departed_bytes", "dropped_frames", "dropped_bytes", "queued_bytes",
]
FDB_FIELDS = ["node", "vid", "mac", "port", "age_ns"]

# Overview chart geometry (pixels)
CHART_WIDTH = 800
CHART_HEIGHT = 400
CHART_MARGIN = 40

COLORS = [
    (100, 180, 255),
    (100, 255, 150),
    (255, 180, 100),
    (200, 130, 255),
    (255, 255, 100),
    (255, 130, 130),
]


def _write_csv(path: str, header: list[str], rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.info("Saved: %s", path)


def _export_overview_png(series: dict[int, np.ndarray], output_path: str):
    """Delivered throughput per subscriber and sampling window, one polyline each."""
    image = Image.new("RGB", (CHART_WIDTH, CHART_HEIGHT), (255, 255, 255))
    draw = ImageDraw.Draw(image)
    left, top = CHART_MARGIN, CHART_MARGIN // 2
    right, bottom = CHART_WIDTH - CHART_MARGIN // 2, CHART_HEIGHT - CHART_MARGIN
    draw.line([(left, top), (left, bottom), (right, bottom)], fill=(0, 0, 0), width=1)

    peak = max((float(s.max()) for s in series.values() if s.size), default=0.0)
    if peak > 0:
        for i, sub in enumerate(sorted(series)):
            values = series[sub]
            if values.size == 0:
                continue
            xs = np.linspace(left, right, num=values.size) if values.size > 1 else np.array([left])
            ys = bottom - values / peak * (bottom - top)
            points = [(float(x), float(y)) for x, y in zip(xs, ys)]
            color = COLORS[i % len(COLORS)]
            if len(points) > 1:
                draw.line(points, fill=color, width=2)
            else:
                draw.ellipse([points[0][0] - 2, points[0][1] - 2, points[0][0] + 2, points[0][1] + 2], fill=color)
            draw.text((right - 90, top + 12 * i), f"C-VID {sub}", fill=color)
        draw.text((left + 4, top), f"{peak / 1e6:.2f} Mb/s", fill=(0, 0, 0))
    image.save(output_path)
    logger.info("Saved: %s", output_path)


class Exporter:
    def export_all(self, report: RunReport, config: ScenarioConfig, output_dir: str) -> dict[str, str]:
        os.makedirs(output_dir, exist_ok=True)
        paths = {}

        paths["results"] = os.path.join(output_dir, config.outputs.csv)
        _write_csv(paths["results"], CSV_FIELDS, (row.as_csv() for row in report.summary.rows))

        paths["conformance"] = os.path.join(output_dir, "conformance.csv")
        _write_csv(paths["conformance"], CONFORMANCE_FIELDS, (
            [v.element, v.rate, v.bucket_size, v.departures, f"{v.worst_excess_bits:.3f}", int(v.passed)]
            for v in report.summary.conformance
        ))

        paths["counters"] = os.path.join(output_dir, "counters.csv")
        _write_csv(paths["counters"], COUNTER_FIELDS, (
            [s.time_ns, s.element, s.flow] + [s.counters[k] for k in COUNTER_FIELDS[3:-1]]
            + ["" if s.queued_bytes is None else s.queued_bytes]
            for s in report.samples
        ))

        paths["fdb"] = os.path.join(output_dir, "fdb.csv")
        _write_csv(paths["fdb"], FDB_FIELDS, (
            [node, *row] for node, rows in report.fdb.items() for row in rows
        ))

        paths["scenario"] = os.path.join(output_dir, "scenario.conf")
        with open(paths["scenario"], "w", encoding="utf-8", newline="\n") as f:
            f.write(dump_config(config))
        logger.info("Saved: %s", paths["scenario"])

        paths["overview"] = os.path.join(output_dir, "overview.png")
        _export_overview_png(report.series, paths["overview"])

        # Byte-stable: no timestamps or host details
        summary = {
            "seed": config.run.seed,
            "duration_ns": config.run.duration_ns,
            "end_ns": report.end_ns,
            "all_conformant": report.summary.all_conformant,
            "stage_audit": {
                "shared_frames": report.audit.shared_frames,
                "legacy_frames": report.audit.legacy_frames,
                "violations": report.audit.violations,
            },
            "classifier_anomalies": report.classifier_anomalies,
            "unsolicited_frames": report.unsolicited_frames,
            "residual_bytes": report.residual_bytes,
            "drop_sites": report.drop_sites,
            "nodes": {name: asdict(c) for name, c in report.node_counters.items()},
            "subscribers": [dict(zip(CSV_FIELDS, row.as_csv())) for row in report.summary.rows],
        }
        paths["summary"] = os.path.join(output_dir, "summary.json")
        with open(paths["summary"], "w", encoding="utf-8", newline="\n") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info("Saved: %s", paths["summary"])
        return paths
