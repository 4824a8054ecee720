"""Command-line client for the scenario service.

The CLI never computes anything itself: it validates the config locally for
fast feedback, then talks to the HTTP service (an in-process instance by
default, a remote one with ``--server``) and writes whatever artifacts come
back.  Exit codes: 0 on success, 1 when a computation or the transport
fails, 2 when the configuration is at fault.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import httpx

from .config import ConfigError, parse_config_text

SOLVE_MODES = ("exact", "hf", "rank", "pekar", "hvz", "scan")
EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_CONFIG = 2


def _error(stage: str, message: str, code: int) -> int:
    record = json.dumps({"error": {"stage": stage, "message": message}},
                        sort_keys=True)
    print(record, file=sys.stderr)
    return code


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    with warnings.catch_warnings():
        # starlette warns about its httpx-based test client on import;
        # stderr is reserved for our error records.
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app)


def _write_files(out_dir: str, files: dict) -> list:
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(files):
        (directory / name).write_text(files[name], encoding="utf-8")
        written.append(name)
    return written


def _post_run(args, expected_scenarios) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as err:
        return _error("config", f"cannot read {args.config}: {err}",
                      EXIT_CONFIG)
    try:
        config = parse_config_text(text)
    except ConfigError as err:
        return _error("config", str(err), EXIT_CONFIG)
    if config.scenario not in expected_scenarios:
        return _error("config",
                      f"scenario {config.scenario!r} does not match the "
                      f"requested command", EXIT_CONFIG)
    payload = {"config_text": text}
    if args.seed is not None:
        payload["seed"] = args.seed
    if getattr(args, "restarts", None) is not None:
        payload["restarts"] = args.restarts
    try:
        with _client(args.server) as client:
            response = client.post("/run", json=payload)
    except httpx.HTTPError as err:
        return _error("transport", str(err), EXIT_COMPUTATION)
    if response.status_code == 422:
        return _error("config", _detail(response), EXIT_CONFIG)
    if response.status_code != 200:
        return _error("computation", _detail(response), EXIT_COMPUTATION)
    body = response.json()
    written = _write_files(args.out, body["files"])
    print(f"{body['scenario']}: wrote {', '.join(written)} to {args.out}")
    for key in sorted(body["summary"]):
        print(f"  {key} = {json.dumps(body['summary'][key], sort_keys=True)}")
    return EXIT_OK


def _run_verify(args) -> int:
    payload = {"level": args.level, "seed": args.seed}
    try:
        with _client(args.server) as client:
            response = client.post("/verify", json=payload)
    except httpx.HTTPError as err:
        return _error("transport", str(err), EXIT_COMPUTATION)
    if response.status_code != 200:
        return _error("computation", _detail(response), EXIT_COMPUTATION)
    body = response.json()
    print(body["table"])
    return EXIT_OK if body["all_passed"] else EXIT_COMPUTATION


def _detail(response) -> str:
    try:
        return str(response.json().get("detail", response.text))
    except ValueError:
        return response.text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="focklab",
        description="Truncated-Fock-space solvers and diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run a solver scenario")
    solve.add_argument("mode", choices=SOLVE_MODES)
    solve.add_argument("--config", required=True, help="dotted-key config file")
    solve.add_argument("--out", required=True, help="output directory")
    solve.add_argument("--seed", type=int, default=None)
    solve.add_argument("--restarts", type=int, default=None)
    solve.add_argument("--server", default=None,
                       help="base URL of a running service (default: in-process)")

    report = sub.add_parser("report",
                            help="run a diagnostic scenario (state sequences)")
    report.add_argument("--config", required=True)
    report.add_argument("--out", required=True)
    report.add_argument("--seed", type=int, default=None)
    report.add_argument("--server", default=None)

    verify = sub.add_parser("verify", help="run the identity battery")
    verify.add_argument("--level", choices=("quick", "full"), default="quick")
    verify.add_argument("--seed", type=int, default=20240521)
    verify.add_argument("--server", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return _post_run(args, expected_scenarios=(args.mode,))
    if args.command == "report":
        return _post_run(args, expected_scenarios=("escaping",))
    return _run_verify(args)


if __name__ == "__main__":
    sys.exit(main())
