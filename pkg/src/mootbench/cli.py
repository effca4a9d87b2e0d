"""Command-line client for the benchmark service.

Talks HTTP to a running server when --server is given; otherwise it
mounts the service in-process, so every subcommand works offline with no
daemon.  Datasets are read client-side and sent inline, which keeps the
same code path for local and remote use.  API keys are never flags: the
llm backend reads them from the environment variable named by
--api-key-env.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import httpx


def make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        # starlette warns about its httpx-based TestClient; the in-process
        # transport is exactly what we want for the local mode
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def collect_datasets(paths: list[str]) -> list[tuple[str, str]]:
    """Expand files and directories into (name, csv text) pairs."""
    out: list[tuple[str, str]] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files = sorted(p.glob("*.csv"))
        elif p.exists():
            files = [p]
        else:
            raise FileNotFoundError(f"dataset path {raw!r} does not exist")
        for f in files:
            out.append((f.stem, f.read_text(encoding="utf-8")))
    return out


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def cmd_neo(args, client) -> int:
    response = client.post(
        "/neo", json={"confidence": args.confidence, "epsilon": args.epsilon}
    )
    if response.status_code != 200:
        return _fail(response.text)
    print(response.json()["samples"])
    return 0


def cmd_validate(args, client) -> int:
    try:
        datasets = collect_datasets(args.data)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    if not datasets:
        return _fail("no datasets found")
    bad = 0
    for name, text in datasets:
        response = client.post("/datasets/validate", json={"name": name, "csv_text": text})
        if response.status_code != 200:
            return _fail(response.text)
        body = response.json()
        if body["valid"]:
            print(
                f"{name}: ok rows={body['rows']} x={body['x_dims']} "
                f"y={body['y_dims']} {body['dimensionality']}"
            )
        else:
            bad += 1
            print(f"{name}: INVALID {'; '.join(body['errors'])}")
    return 1 if bad else 0


def _experiment_payload(args) -> dict:
    datasets = collect_datasets(args.data)
    if not datasets:
        raise FileNotFoundError("no datasets found under the given --data paths")
    payload = {
        "datasets": [{"name": n, "csv_text": t} for n, t in datasets],
        "out_dir": args.out,
        "treatments": args.treatments.split(","),
        "budgets": [int(b) for b in args.budgets.split(",")],
        "repeats": args.repeats,
        "seed": args.seed,
        "backend": args.backend,
        "jobs": args.jobs,
        "warm": args.warm,
        "examples_per_round": args.examples_per_round,
    }
    if args.backend == "llm":
        payload["backend_settings"] = {
            "endpoint": args.endpoint,
            "model": args.model,
            "api_key_env": args.api_key_env,
            "cache_dir": args.cache_dir,
            "temperature": args.temperature,
        }
    return payload


def _print_summary(summary: dict) -> None:
    print(f"out_dir: {summary['out_dir']}")
    print(f"config_hash: {summary['config_hash']}")
    print(
        f"cells: {summary['cells']} failed: {summary['failed_cells']} "
        f"envelope_violations: {summary['envelope_violations']}"
    )
    for table in summary.get("rank_tables", []):
        print(f"\n# ranks B={table['budget']} stratum={table['stratum']}")
        print(table["markdown"], end="")


def cmd_run(args, client) -> int:
    try:
        payload = _experiment_payload(args)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    if args.no_wait:
        response = client.post("/experiments", json=payload)
        if response.status_code != 200:
            return _fail(response.text)
        job = response.json()
        while job["status"] in ("pending", "running"):
            time.sleep(args.poll_seconds)
            job = client.get(f"/experiments/{job['job_id']}").json()
    else:
        response = client.post("/experiments", params={"wait": "true"}, json=payload)
        if response.status_code != 200:
            return _fail(response.text)
        job = response.json()
    if job["status"] != "done":
        return _fail(job.get("error") or f"job ended in state {job['status']}")
    _print_summary(job["summary"])
    return 0


def cmd_rank(args, client) -> int:
    body: dict = {"out_dir": args.out}
    if args.seed is not None:
        body["seed"] = args.seed
    response = client.post("/rank", json=body)
    if response.status_code != 200:
        return _fail(response.text)
    for table in response.json()["tables"]:
        print(f"# ranks B={table['budget']} stratum={table['stratum']}")
        print(table["markdown"], end="")
        print()
    return 0


def cmd_curves(args, client) -> int:
    response = client.post("/curves", json={"out_dir": args.out})
    if response.status_code != 200:
        return _fail(response.text)
    for path in response.json()["files"]:
        print(path)
    return 0


def cmd_serve(args, client=None) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mootbench")
    parser.add_argument("--server", default=None, help="base URL of a running service; in-process when omitted")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("neo", help="near-enough sample-size bound")
    p.add_argument("--confidence", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(func=cmd_neo)

    p = sub.add_parser("validate", help="lint MOOT CSV datasets")
    p.add_argument("--data", nargs="+", required=True, help="dataset files or directories")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run the experiment matrix")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory (on the service host)")
    p.add_argument("--treatments", default=",".join(
        ("synthcore", "ucb_gpm", "tpe", "exploit", "explore", "random", "baseline")))
    p.add_argument("--budgets", default="20,30,50,100")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--backend", choices=("surrogate", "llm"), default="surrogate")
    p.add_argument("--endpoint", default="https://api.openai.com/v1/chat/completions")
    p.add_argument("--model", default="gpt-4o-mini")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--api-key-env", default="MOOTBENCH_API_KEY",
                   help="name of the environment variable holding the API key")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--warm", type=int, default=4)
    p.add_argument("--examples-per-round", type=int, default=3)
    p.add_argument("--no-wait", action="store_true", help="submit and poll instead of waiting")
    p.add_argument("--poll-seconds", type=float, default=2.0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rank", help="re-rank a persisted result directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("curves", help="re-emit curve CSVs from persisted results")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.func is cmd_serve:
        return cmd_serve(args)
    with make_client(args.server) as client:
        return args.func(args, client)


if __name__ == "__main__":
    sys.exit(main())
