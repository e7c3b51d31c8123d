"""Command-line entry point: run one testing campaign from a YAML config.

Exit codes: 0 on success, 2 for configuration problems, 3 for runtime
failures, 130 when interrupted.  A first Ctrl-C requests a graceful stop (the
in-flight batch finishes and a checkpoint lands on disk); a second one aborts
immediately.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
from datetime import datetime, timezone
from pathlib import Path

from .config import ConfigError, build_execution, load_config
from .engine.campaign import CampaignContext, run_campaign

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV_VAR = "SCENOFUZZ_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_INTERRUPTED = 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenofuzz",
        description="Search-based scenario testing for driving agents.")
    parser.add_argument("--config-name", "-cn", required=True,
                        help="config file name inside the config directory "
                             "(.yaml suffix optional)")
    parser.add_argument("--config-dir", default="./configs",
                        help="directory holding config files "
                             "(default: ./configs)")
    parser.add_argument("--seed", type=int, default=0,
                        help="random seed for the campaign (default: 0)")
    parser.add_argument("--workers", type=int, default=None,
                        help="override scenario_runner.parameters.worker_pool")
    parser.add_argument("--max-evals", type=int, default=None,
                        help="override the evaluation budget")
    parser.add_argument("--run-id", default=None,
                        help="name of the output directory (default: UTC "
                             "timestamp plus seed)")
    parser.add_argument("--resume", action="store_true",
                        help="resume the run-id from its checkpoint")
    parser.add_argument("--export-svg", action="store_true",
                        help="render an SVG for each violation recording")
    parser.add_argument("--debug", action="store_true",
                        help="verbose logging")
    return parser


def _config_path(args) -> Path:
    name = args.config_name
    if not name.endswith((".yaml", ".yml")):
        name += ".yaml"
    return Path(args.config_dir) / name


def default_run_id(seed: int, now: datetime | None = None) -> str:
    now = now or datetime.now(timezone.utc)
    return f"{now.strftime('%Y%m%d-%H%M%S')}-seed{seed}"


def _export_svgs(ctx, output_dir: Path) -> int:
    from .runner import read_recording
    from .svg_export import render_recording_svg

    svg_dir = output_dir / "svg"
    count = 0
    for record in ctx.records:
        if record["outcome"] != "CollisionViolation":
            continue
        rec_path = output_dir / "recordings" / \
            f"{record['scenario_id']}.record.json"
        if not rec_path.exists():
            continue
        recording = read_recording(rec_path)
        if not recording.frames:
            continue
        svg_dir.mkdir(parents=True, exist_ok=True)
        svg = render_recording_svg(recording, ctx.settings.lane_map)
        (svg_dir / f"{record['scenario_id']}.svg").write_text(svg)
        count += 1
    return count


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_config(_config_path(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        settings, budget, params = build_execution(config)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.max_evals is not None:
        from .engine.campaign import CampaignBudget
        budget = CampaignBudget(max_evaluations=args.max_evals)
        params = dict(params, max_evaluations=args.max_evals)
    workers = args.workers if args.workers is not None else config.worker_pool

    output_root = os.environ.get(OUTPUT_ROOT_ENV_VAR) or config.output_root
    run_id = args.run_id or default_run_id(args.seed)
    output_dir = Path(output_root) / run_id
    resume = args.resume or config.resume

    try:
        ctx = CampaignContext(settings, budget, seed=args.seed,
                              workers=workers, output_dir=output_dir,
                              resume=resume)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    interrupted = []

    def on_sigint(signum, frame):
        if interrupted:
            raise KeyboardInterrupt
        interrupted.append(True)
        ctx.stop_requested = True
        log.warning("stop requested; finishing the current batch and "
                    "checkpointing (Ctrl-C again to abort)")

    previous = signal.signal(signal.SIGINT, on_sigint)
    try:
        report = run_campaign(config.algorithm, ctx, params)
    except KeyboardInterrupt:
        print("aborted", file=sys.stderr)
        return EXIT_INTERRUPTED
    except Exception as exc:
        log.exception("campaign failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        signal.signal(signal.SIGINT, previous)

    svg_count = 0
    if args.export_svg:
        try:
            svg_count = _export_svgs(ctx, output_dir)
        except Exception as exc:
            log.exception("SVG export failed")
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME

    summary = (f"algorithm={report['algorithm']} seed={report['seed']} "
               f"evaluations={report['evaluations']} "
               f"violations={report['violations']} "
               f"first_violation={report['first_violation_index']} "
               f"output={output_dir}")
    if args.export_svg:
        summary += f" svgs={svg_count}"
    print(summary)
    return EXIT_INTERRUPTED if interrupted else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
