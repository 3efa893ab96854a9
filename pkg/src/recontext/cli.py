"""Command-line entry point.

    recontext run -c run.cfg [--stages augment,filter] [--seed 42]
    recontext serve-eval -c run.cfg [--port 8080]
    recontext report -c run.cfg

Exit codes: 0 success, 1 stage failure, 2 config or usage error.
"""

from __future__ import annotations

import argparse
import sys

from .config import validate_config
from .errors import ConfigError, RecontextError
from .eval_http import EvalApp, make_server
from .pipeline import PipelineRun


def _load_config(args) -> dict:
    config, warnings = validate_config(args.config)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="recontext", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute pipeline stages")
    run_p.add_argument("-c", "--config", required=True)
    run_p.add_argument("--stages", default=None, help="comma-separated stage subset")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")

    serve_p = sub.add_parser("serve-eval", help="serve the rating + curation API")
    serve_p.add_argument("-c", "--config", required=True)
    serve_p.add_argument("--host", default=None)
    serve_p.add_argument("--port", type=int, default=None)
    serve_p.add_argument("--seed", type=int, default=None)

    report_p = sub.add_parser("report", help="run the report stage only")
    report_p.add_argument("-c", "--config", required=True)
    report_p.add_argument("--seed", type=int, default=None)

    args = parser.parse_args(argv)

    try:
        config = _load_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            stages = args.stages.split(",") if args.stages else None
            return PipelineRun(config).run(stages)

        if args.command == "report":
            return PipelineRun(config).run(["report"])

        if args.command == "serve-eval":
            runner = PipelineRun(config)
            service = runner.build_eval_service()
            app = EvalApp(service, bank=runner.bank, store=runner.store)
            host = args.host or config["eval"]["host"]
            port = args.port if args.port is not None else config["eval"]["port"]
            server = make_server(app, host, port)
            print(f"serving eval API on http://{host}:{port} ({service.open_task_count()} open tasks)")
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                pass
            finally:
                server.server_close()
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RecontextError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
