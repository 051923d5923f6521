"""Render a session report (as loaded from JSON) for people or spreadsheets."""

from __future__ import annotations

import csv
import io


def _table(title, matrix, columns):
    rows = list(matrix)
    width = max([len("true \\ decided")] + [len(r) for r in rows])
    colw = [max(len(c), 5) for c in columns]
    lines = [title,
             "  " + "true \\ decided".ljust(width) + "  "
             + "  ".join(c.rjust(w) for c, w in zip(columns, colw))]
    for r in rows:
        cells = "  ".join(str(matrix[r].get(c, 0)).rjust(w) for c, w in zip(columns, colw))
        lines.append("  " + r.ljust(width) + "  " + cells)
    return lines


def format_text(report: dict) -> str:
    out = []
    link = report["link"]
    latency = link["mean_latency_ms"]
    out.append(f"frames delivered: {link['frames_delivered']}/{link['frames_sent']} "
               f"({100 * link['delivered_fraction']:.1f}%), mean latency "
               + ("n/a" if latency is None else f"{latency:.1f} ms"))
    for s in report["subjects"]:
        name = f" ({s['name']})" if s.get("name") else ""
        out.append("")
        out.append(f"subject {s['subject_id']}{name}")
        out.append(f"  template path: accuracy {100 * s['template_accuracy']:.1f}%, "
                   f"no-match {100 * s['nomatch_rate']:.1f}%, "
                   f"ambiguous {100 * s['ambiguous_rate']:.1f}%")
        out.append(f"  neural path:   accuracy {100 * s['neural_accuracy']:.1f}%")
        tc = s["template_confusion"]
        out += _table("  template confusion", tc, list(next(iter(tc.values()))))
        out += _table("  neural confusion", s["neural_confusion"], s["labels"])
    out.append("")
    out.append(f"overall: template {100 * report['template_accuracy']:.1f}%, "
               f"neural {100 * report['neural_accuracy']:.1f}%")
    if "wall_clock_seconds" in report:
        out.append(f"wall clock: {report['wall_clock_seconds']:.2f} s")
    return "\n".join(out) + "\n"


def format_csv(report: dict) -> str:
    """Long format: one row per (subject, path, true item, decided item)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "path", "true_item", "decided", "count"])
    for s in report["subjects"]:
        for path in ("template", "neural"):
            for true, row in s[f"{path}_confusion"].items():
                for decided, count in row.items():
                    w.writerow([s["subject_id"], path, true, decided, count])
    return buf.getvalue()
