"""Command-line client for the experiment service.

Every subcommand speaks HTTP to the FastAPI app: against a remote server
when --server is given, otherwise against an in-process instance, so batch
use needs no separate daemon. Exit codes: 0 success, 1 runtime failure,
2 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

__all__ = ["main"]


def _client(server: str | None):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient
    from .service import create_app
    return TestClient(create_app())


def _read_config_file(path: str | None) -> str | None:
    if path is None:
        return None
    if not os.path.exists(path):
        print(f"error: config file {path!r} not found", file=sys.stderr)
        raise SystemExit(2)
    with open(path) as f:
        return f.read()


def _overrides(args) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            print(f"error: --set expects key=value, got {item!r}", file=sys.stderr)
            raise SystemExit(2)
        key, _, value = item.partition("=")
        out[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        out["run.seeds"] = str(args.seed)
    if getattr(args, "out", None) is not None:
        out["run.out_dir"] = args.out
    return out


def _fail_for(response) -> int:
    try:
        detail = response.json().get("detail", response.text)
    except Exception:
        detail = response.text
    print(f"error: {detail}", file=sys.stderr)
    return 2 if response.status_code in (400, 422) else 1


def _discover_config(checkpoint: str) -> str | None:
    """Find the config echo written next to a run checkpoint."""
    d = os.path.dirname(os.path.abspath(checkpoint))
    for candidate in (os.path.join(d, "config.txt"),
                      os.path.join(os.path.dirname(d), "config.txt")):
        if os.path.exists(candidate):
            with open(candidate) as f:
                return f.read()
    return None


def cmd_train(args) -> int:
    config_text = _read_config_file(args.config)
    client = _client(args.server)
    response = client.post("/runs", json={
        "config_text": config_text,
        "preset": args.preset,
        "overrides": _overrides(args),
    })
    if response.status_code != 200:
        return _fail_for(response)
    created = response.json()
    run_id = created["run_id"]
    print(f"run {run_id} -> {created['run_dir']}")
    last_line = ""
    while True:
        status = client.get(f"/runs/{run_id}").json()
        line = (f"state={status['state']} seeds {status['seeds_done']}"
                f"/{status['total_seeds']} env_steps={status['env_steps']}")
        if status.get("latest_eval_return") is not None:
            line += f" eval_return={status['latest_eval_return']:.4f}"
        if line != last_line:
            print(line)
            last_line = line
        if status["state"] in ("finished", "failed"):
            break
        time.sleep(args.poll_interval)
    if status["state"] == "failed":
        print(f"error: {status['detail']}", file=sys.stderr)
        return 1
    if status.get("mean_final_return") is not None:
        print(f"final return over {status['total_seeds']} seed(s): "
              f"{status['mean_final_return']:.4f} "
              f"+/- {status['std_final_return']:.4f}")
    return 0


def cmd_eval(args) -> int:
    config_text = _read_config_file(args.config)
    if config_text is None and args.preset is None:
        config_text = _discover_config(args.checkpoint)
        if config_text is None:
            print("error: no --config/--preset given and no config.txt found "
                  "next to the checkpoint", file=sys.stderr)
            return 2
    client = _client(args.server)
    response = client.post("/eval", json={
        "checkpoint": os.path.abspath(args.checkpoint),
        "episodes": args.episodes,
        "config_text": config_text,
        "preset": args.preset,
        "overrides": _overrides(args),
        "seed": args.eval_seed,
        "trace_path": os.path.abspath(args.trace_out) if args.trace_out else None,
    })
    if response.status_code != 200:
        return _fail_for(response)
    stats = response.json()
    print(json.dumps(stats, indent=2))
    return 0


def cmd_diagnose(args) -> int:
    config_text = _read_config_file(args.config)
    if config_text is None and args.preset is None:
        config_text = _discover_config(args.checkpoint)
        if config_text is None:
            print("error: no --config/--preset given and no config.txt found "
                  "next to the checkpoint", file=sys.stderr)
            return 2
    client = _client(args.server)
    response = client.post("/diagnose", json={
        "checkpoint": os.path.abspath(args.checkpoint),
        "episodes": args.episodes,
        "out_path": os.path.abspath(args.out) if args.out else None,
        "config_text": config_text,
        "preset": args.preset,
        "overrides": _overrides(args),
        "seed": args.eval_seed,
    })
    if response.status_code != 200:
        return _fail_for(response)
    result = response.json()
    print(f"subtask-recognition alignment score: {result['alignment_score']:.4f}")
    print(f"per-step diagnostics ({result['rows']} rows): {result['csv_path']}")
    return 0


def cmd_gradcheck(args) -> int:
    client = _client(args.server)
    response = client.post("/gradcheck", json={"tolerance": args.tolerance,
                                               "seed": args.check_seed})
    if response.status_code != 200:
        return _fail_for(response)
    report = response.json()
    for item in report["reports"]:
        flag = "pass" if item["passed"] else "FAIL"
        print(f"{item['network']:<20} max_rel_error={item['max_rel_error']:.3e} {flag}")
    print(f"overall: {'pass' if report['passed'] else 'FAIL'} "
          f"(tolerance {report['tolerance']:.1e})")
    return 0 if report["passed"] else 1


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smaug",
        description="Sliding-window subtask-recognition MARL experiments",
    )
    parser.add_argument("--server", default=None,
                        help="experiment service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--config", default=None, help="config file (key=value lines)")
    p.add_argument("--preset", default=None,
                   help="preset name(s), comma separated (e.g. matrix-game)")
    p.add_argument("--seed", default=None,
                   help="override run.seeds (comma separated)")
    p.add_argument("--out", default=None, help="override run.out_dir")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("--poll-interval", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=32)
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--trace-out", default=None,
                   help="write episode traces (newline-delimited JSON)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="dump subtask-recognition diagnostics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--out", default=None, help="diagnostics CSV path")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--check-seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="start the experiment service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8800)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
