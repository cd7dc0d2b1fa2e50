"""Command-line client for the epiwarn service.

All commands speak HTTP to the service layer: against a remote instance
when ``--server`` is given, otherwise against an in-process transport, so
no daemon is needed for one-shot runs. ``serve`` starts the service.

Exit codes: 0 success, 2 invalid input or config (including data files
that fail validation), 1 engine failure.
"""

from __future__ import annotations

from . import _threads  # noqa: F401  (must precede numpy imports)

import argparse
import sys

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epiwarn",
        description="Epidemic early-warning engine: validate data, generate "
                    "synthetic universes, run backtests, export plot data.",
    )
    parser.add_argument("--server", metavar="URL", default=None,
                        help="base URL of a running epiwarn service "
                             "(default: run in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check epi/tweet CSVs and show the city universe")
    p.add_argument("epi_path", help="epidemiological CSV (city_id,week,cases,population)")
    p.add_argument("tweet_path", nargs="?", default=None,
                   help="optional tweet CSV (city_id,week,tweet_count)")

    p = sub.add_parser("synth", help="generate a synthetic city universe")
    p.add_argument("--config", default=None, help="synthetic spec file (defaults used if omitted)")
    p.add_argument("--out", required=True, help="output directory for the CSV pair")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("backtest", help="run the rolling-origin comparison grid")
    p.add_argument("--config", required=True, help="backtest config file")
    p.add_argument("--out", required=True, help="output directory for report files")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("plotdata", help="export plot-ready TSV from a run's outputs")
    p.add_argument("report_path", help="report.json (or the run's output directory)")
    p.add_argument("--kind", required=True, choices=["diff_bars", "auc_cdf", "qq"])
    p.add_argument("--out", default=None, help="output TSV path")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _make_client(server: str | None):
    if server is not None:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def _detail_message(payload) -> str:
    detail = payload.get("detail") if isinstance(payload, dict) else None
    if isinstance(detail, dict):
        return f"{detail.get('error_type', 'error')}: {detail.get('message', '')}"
    return str(detail if detail is not None else payload)


def _post(client, path: str, body: dict) -> tuple[int, dict]:
    response = client.post(path, json=body)
    try:
        payload = response.json()
    except ValueError:
        payload = {"detail": response.text}
    return response.status_code, payload


def _cmd_validate(client, args) -> int:
    status, payload = _post(client, "/api/validate",
                            {"epi_path": args.epi_path, "tweet_path": args.tweet_path})
    if status != 200:
        print(_detail_message(payload), file=sys.stderr)
        return EXIT_USAGE
    if not payload["ok"]:
        for message in payload["errors"]:
            print(f"error: {message}", file=sys.stderr)
        return EXIT_USAGE
    print(f"cities: {payload['n_cities']}")
    print(f"passing filter: {payload['n_passing_filter']}")
    print("tweets: present" if payload["tweets_present"] else "tweets: absent")
    for city in payload["cities"]:
        tweet_note = "tweets" if city["has_tweets"] else "no tweets"
        verdict = "kept" if city["passes_filter"] else "filtered out"
        print(
            f"  {city['city_id']}: pop {city['population']}, weeks "
            f"{city['first_week']}..{city['last_week']}, peak DIR "
            f"{city['peak_dir']:.1f} ({city['peak_level']}), {tweet_note}, {verdict}"
        )
    return EXIT_OK


def _cmd_synth(client, args) -> int:
    status, payload = _post(client, "/api/synth",
                            {"out_dir": args.out, "spec_path": args.config, "seed": args.seed})
    if status != 200:
        print(_detail_message(payload), file=sys.stderr)
        return EXIT_USAGE if status == 400 else EXIT_FAILURE
    print(f"wrote {payload['epi_path']}")
    print(f"wrote {payload['tweet_path']}")
    print(f"{payload['n_cities']} cities, {payload['weeks']} weeks")
    return EXIT_OK


def _cmd_backtest(client, args) -> int:
    body = {"config_path": args.config, "out_dir": args.out,
            "seed": args.seed, "jobs": args.jobs}
    status, payload = _post(client, "/api/backtest", body)
    if status != 200:
        print(_detail_message(payload), file=sys.stderr)
        return EXIT_USAGE if status == 400 else EXIT_FAILURE
    print(payload["table_text"])
    print(f"predictions: {payload['predictions_path']}")
    print(f"report: {payload['report_path']}")
    print(f"manifest: {payload['manifest_path']}")
    return EXIT_OK


def _cmd_plotdata(client, args) -> int:
    body = {"report_path": args.report_path, "kind": args.kind, "out_path": args.out}
    status, payload = _post(client, "/api/plotdata", body)
    if status != 200:
        print(_detail_message(payload), file=sys.stderr)
        return EXIT_USAGE if status == 400 else EXIT_FAILURE
    print(f"wrote {payload['out_path']} ({payload['n_rows']} rows)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    client = _make_client(args.server)
    try:
        if args.command == "validate":
            return _cmd_validate(client, args)
        if args.command == "synth":
            return _cmd_synth(client, args)
        if args.command == "backtest":
            return _cmd_backtest(client, args)
        if args.command == "plotdata":
            return _cmd_plotdata(client, args)
        raise AssertionError(f"unhandled command {args.command}")
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
