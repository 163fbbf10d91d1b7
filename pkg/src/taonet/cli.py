"""Command-line client for the service.

By default commands run against an in-process instance of the app (no
sockets, no server to start); pass --server to talk to a deployed
instance instead. Either way the CLI only builds requests and prints
responses; all logic lives behind the HTTP surface.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx


class ServiceClient:
    """POSTs JSON to the service, in-process or remote."""

    def __init__(self, server: str | None = None):
        self._server = server
        self._app = None
        if server is None:
            from .service.app import create_app
            self._app = create_app()

    def post(self, path: str, payload: dict) -> httpx.Response:
        if self._server is not None:
            with httpx.Client(base_url=self._server, timeout=None) as client:
                return client.post(path, json=payload)

        async def go():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://taonet.local",
                                         timeout=None) as client:
                return await client.post(path, json=payload)

        return asyncio.run(go())


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file mirroring RunConfig")
    parser.add_argument("--dataset", help="dataset JSONL path")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--routing-mode", dest="routing_mode",
                        choices=["adaptive", "all-id", "all-llm"])
    parser.add_argument("--sps-mode", dest="sps_mode",
                        choices=["strict", "complete", "extended"])
    parser.add_argument("--backend",
                        choices=["remote", "mock-oracle", "mock-keyword"])
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective config with provenance and exit")


def build_config_payload(args) -> dict:
    """File config plus CLI overrides, unvalidated (the service validates)."""
    payload: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            payload.update(json.load(fh))
    for key in ("dataset", "seed", "out_dir", "routing_mode", "sps_mode",
                "backend"):
        value = getattr(args, key, None)
        if value is not None:
            payload[key] = value
    return payload


def _emit(response: httpx.Response) -> int:
    try:
        body = response.json()
    except ValueError:
        body = {"detail": response.text}
    text = json.dumps(body, indent=2, sort_keys=True)
    if response.status_code >= 400:
        print(text, file=sys.stderr)
        return 1
    print(text)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taonet",
        description="Two-stage adaptive ID/OOD encrypted traffic classification")
    parser.add_argument("--server",
                        help="service base URL (default: run in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset JSONL path")
    p.add_argument("--spec", help="synthetic spec JSON (default: packaged spec)")
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("ingest-pcap", help="tokenize a capture into a dataset")
    p.add_argument("--pcap", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--j", type=int, default=128)
    p.add_argument("--label")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--limit", type=int)

    for name, extra in (
        ("train", []),
        ("calibrate", ["run_dir"]),
        ("classify", ["run_dir", "split", "sample_id"]),
        ("evaluate", ["runs"]),
        ("ablate", []),
        ("sps-compare", []),
        ("auroc", ["run_dir", "split"]),
    ):
        p = sub.add_parser(name)
        _add_config_flags(p)
        if "run_dir" in extra:
            p.add_argument("--run-dir", dest="run_dir",
                           help="trained run directory (default: derived from config)")
        if "split" in extra:
            p.add_argument("--split", default="test" if name == "classify" else "valid",
                           choices=["train", "valid", "test"])
        if "sample_id" in extra:
            p.add_argument("--sample-id", dest="sample_id",
                           help="classify a single sample instead of a split")
        if "runs" in extra:
            p.add_argument("--runs", type=int, default=1,
                           help="number of seeds, starting at --seed")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        uvicorn.run("taonet.service.app:app", host=args.host, port=args.port)
        return 0

    client = ServiceClient(args.server)

    if args.command == "gen-synthetic":
        payload = {"out_path": args.out, "spec_path": args.spec,
                   "n_per_class": args.n_per_class, "seed": args.seed}
        return _emit(client.post("/datasets/synthetic", payload))

    if args.command == "ingest-pcap":
        payload = {"pcap_path": args.pcap, "out_path": args.out, "j": args.j,
                   "label": args.label, "split": args.split, "limit": args.limit}
        return _emit(client.post("/datasets/pcap", payload))

    config = build_config_payload(args)
    if args.print_config:
        return _emit(client.post("/config/resolve", {"config": config}))

    if args.command == "train":
        return _emit(client.post("/train", {"config": config}))
    if args.command == "calibrate":
        return _emit(client.post("/calibrate", {"config": config,
                                                "run_dir": args.run_dir}))
    if args.command == "classify":
        return _emit(client.post("/classify", {"config": config,
                                               "run_dir": args.run_dir,
                                               "split": args.split,
                                               "sample_id": args.sample_id}))
    if args.command == "evaluate":
        return _emit(client.post("/evaluate", {"config": config,
                                               "runs": args.runs}))
    if args.command == "ablate":
        return _emit(client.post("/ablate", {"config": config}))
    if args.command == "sps-compare":
        return _emit(client.post("/sps/compare", {"config": config}))
    if args.command == "auroc":
        return _emit(client.post("/auroc", {"config": config,
                                            "run_dir": args.run_dir,
                                            "split": args.split}))
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
