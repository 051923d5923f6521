"""Command-line entry point: ``mindlink <subcommand>``.

Exit codes: 0 success, 1 configuration error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from mindlink.enroll import TemplateDatabase, load_database, save_database
from mindlink.errors import ConfigError, DataError, MindlinkError
from mindlink.match import MatchConfig, classify, decision_to_json
from mindlink.report import format_csv, format_text
from mindlink.session import SessionConfig, enroll_subject, joe_profile, run_session
from mindlink.signal import generate_trace, read_trace_csv, write_trace_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2
DB_ENV = "MINDLINK_DB"


def _db_path(args) -> Path:
    path = args.db or os.environ.get(DB_ENV)
    if not path:
        raise ConfigError(f"no database given: pass --db or set {DB_ENV}")
    return Path(path)


def cmd_enroll(args) -> int:
    config = SessionConfig.load(args.config)
    db = TemplateDatabase()
    for profile in config.subjects:
        templates, _, _ = enroll_subject(config, profile)
        for tpl in templates:
            db.add(tpl)
    root = save_database(db, _db_path(args))
    print(f"enrolled {len(db)} templates for {len(db.subjects)} subjects into {root}")
    return EXIT_OK


def cmd_classify(args) -> int:
    db = load_database(_db_path(args))
    for w in db.warnings:
        print(f"warning: {w}", file=sys.stderr)
    subject = args.subject
    if subject is None:
        if len(db.subjects) != 1:
            raise ConfigError(f"database holds subjects {sorted(db.subjects)}; pass --subject")
        subject = next(iter(db.subjects))
    templates = db.templates_for(subject)
    try:
        trace = read_trace_csv(args.trace, subject_id=subject)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read trace {args.trace}: {exc}") from exc
    config = MatchConfig(args.threshold, args.margin, args.max_lag)
    print(decision_to_json(classify(trace, templates, config)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = SessionConfig.load(args.config)
    report = run_session(config, workers=args.workers)
    Path(args.out).write_text(report.to_json() + "\n")
    print(format_text(report.to_dict()), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.input) as fh:
            data = json.load(fh)
        text = format_csv(data) if args.csv else format_text(data)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read report {args.input}: {exc}") from exc
    print(text, end="")
    return EXIT_OK


def cmd_export_trace(args) -> int:
    if args.config:
        config = SessionConfig.load(args.config)
    else:
        config = SessionConfig(subjects=(joe_profile(),))
    profiles = {p.subject_id: p for p in config.subjects}
    if args.subject not in profiles:
        raise ConfigError(f"unknown subject {args.subject}; known: {sorted(profiles)}")
    profile = profiles[args.subject]
    try:
        item = profile.item(args.item)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    noise = config.noise_sigma if args.noise is None else args.noise
    trace = generate_trace(profile, item, noise, args.seed, config.sample_rate, config.duration)
    write_trace_csv(trace, args.out)
    print(f"wrote {trace.channels} x {trace.n_samples} trace to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mindlink",
                                     description="Simulated brain-activity relay and matcher")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enroll", help="build a template database from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--db", help=f"database directory (default ${DB_ENV})")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("classify", help="match a CSV trace against stored templates")
    p.add_argument("--db", help=f"database directory (default ${DB_ENV})")
    p.add_argument("--trace", required=True)
    p.add_argument("--subject", type=int)
    p.add_argument("--threshold", type=float, default=MatchConfig.match_threshold)
    p.add_argument("--margin", type=float, default=MatchConfig.ambiguity_margin)
    p.add_argument("--max-lag", type=float, default=MatchConfig.max_lag_fraction)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="run a full session and write a JSON report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="print a saved report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--csv", action="store_true", help="confusion matrices as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-trace", help="write one simulated trace as CSV")
    p.add_argument("--subject", type=int, required=True)
    p.add_argument("--item", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="session config; defaults to the built-in JOE subject")
    p.add_argument("--noise", type=float, help="noise sigma (default: config value)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MindlinkError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
