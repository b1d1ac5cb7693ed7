"""``fleetctl``: operator command line.

Commands talk to a gateway found through ``FLEET_STORE_ADDR``; ``sim run``
works offline and ``serve`` starts a gateway over a simulated fleet.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
import time

import yaml

from ..errors import AllEndpointsFailed, FleetError

DEFAULT_ADDR = "127.0.0.1:8420"


def _env_seed() -> int:
    return int(os.environ.get("FLEET_SEED", "0"))


def _load_yaml_docs(path) -> list:
    with open(path) as fh:
        return [d for d in yaml.safe_load_all(fh) if d is not None]


def _client(args):
    from .client import FailoverPolicy, GatewayClient

    return GatewayClient(args.addr, FailoverPolicy(deadline=args.timeout))


def _call(args, method, path, body=None) -> int:
    try:
        resp = _client(args).call(method, path, body)
    except AllEndpointsFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = resp.body
    if resp.status == 200:
        json.dump(out["result"], sys.stdout, indent=2, sort_keys=True, default=str)
        print()
        return 0
    print(f"error {resp.status}: {out.get('error')}: {out.get('message')}", file=sys.stderr)
    if out.get("detail") is not None:
        json.dump(out["detail"], sys.stderr, indent=2, sort_keys=True)
        print(file=sys.stderr)
    return 1


def cmd_apply(args):
    return _call(args, "PUT", "/v1/desires", {"layers": _load_yaml_docs(args.file)})


def cmd_get(args):
    parts = args.key.split("/")
    if len(parts) != 3 or not all(parts):
        print("error: KEY must be namespace/entity/property", file=sys.stderr)
        return 2
    base = "desires" if args.desire else "facts"
    return _call(args, "GET", f"/v1/{base}/" + "/".join(parts))


def cmd_diff(args):
    return _call(args, "GET", f"/v1/diff/{args.entity}")


def cmd_rollout(args):
    body = {"image": args.image, "max_unavailable": args.max_unavailable}
    if args.targets:
        body["targets"] = args.targets.split(",")
    return _call(args, "POST", "/v1/orchestrate/rollout", body)


def cmd_sequence(args):
    (dag,) = _load_yaml_docs(args.dag)[:1]
    return _call(args, "POST", "/v1/orchestrate/sequence",
                 {"dag": dag, "direction": args.direction, "retries": args.retries})


def cmd_attest(args):
    return _call(args, "GET", f"/v1/attest/{args.node}")


def cmd_metrics(args):
    return _call(args, "GET", "/v1/metrics")


def cmd_remediate(args):
    return _call(args, "POST", "/v1/remediate", json.loads(args.event))


def cmd_flows_add(args):
    rc = 0
    for doc in _load_yaml_docs(args.file):
        for flow in doc.get("flows", [doc]):
            rc = max(rc, _call(args, "POST", "/v1/flows", flow))
    return rc


def _bootstrap(scenario_path, seed, count):
    from ..provisim import Scenario
    from ..runtime import ClusterRuntime

    if scenario_path:
        with open(scenario_path) as fh:
            doc = yaml.safe_load(fh) or {}
    else:
        doc = {"generate": {"count": count}}
    if seed is not None:
        doc["seed"] = seed
    doc.setdefault("seed", _env_seed())
    return ClusterRuntime(Scenario.from_dict(doc))


def cmd_sim_run(args):
    rt = _bootstrap(args.scenario, args.seed, args.nodes)
    rt.deploy(rt.sim.scenario.default_image)
    t0 = time.perf_counter()
    converged = rt.run_until(rt.all_ready, args.ticks)
    summary = {"seed": rt.sim.seed, "nodes": len(rt.node_ids), "ticks": rt.now,
               "converged": converged, "wall_seconds": round(time.perf_counter() - t0, 3),
               "phases": {p.value: c for p, c in sorted(rt.sim.phases().items())}}
    if args.trace:
        rt.sim.flush_trace(args.trace)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0 if converged else 1


def cmd_serve(args):
    from ..metrics import ServiceMetrics
    from .router import Router
    from .server import GatewayApp, GatewayServer

    rt = _bootstrap(args.scenario, args.seed, args.nodes)
    router = Router(rt, ServiceMetrics())
    if not args.no_boot:
        rt.deploy(rt.sim.scenario.default_image)
        rt.run_until(rt.all_ready, 100000)
    host, _, port = args.listen.rpartition(":")
    srv = GatewayServer(GatewayApp(router), host or "127.0.0.1", int(port), args.cluster).start()
    print(f"gateway listening on {srv.address}", flush=True)
    stop = threading.Event()
    try:
        while not stop.wait(args.tick_seconds if args.tick_seconds > 0 else 3600):
            if args.tick_seconds > 0:
                with router._lock:
                    rt.run(1)
    except KeyboardInterrupt:
        pass
    finally:
        srv.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fleetctl", description=__doc__.splitlines()[0])
    p.add_argument("--addr", default=os.environ.get("FLEET_STORE_ADDR", DEFAULT_ADDR),
                   help="gateway address host:port (env FLEET_STORE_ADDR)")
    p.add_argument("--timeout", type=float, default=5.0, help="per-attempt deadline in seconds")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("apply", help="render configuration layers into desires")
    s.add_argument("-f", "--file", required=True)
    s.set_defaults(func=cmd_apply)

    s = sub.add_parser("get", help="read one key")
    s.add_argument("key", help="namespace/entity/property")
    s.add_argument("--desire", action="store_true", help="read the desire instead of the fact")
    s.set_defaults(func=cmd_get)

    s = sub.add_parser("diff", help="desires of an entity that differ from facts")
    s.add_argument("entity")
    s.set_defaults(func=cmd_diff)

    s = sub.add_parser("rollout", help="rolling image update")
    s.add_argument("--image", required=True)
    s.add_argument("--max-unavailable", type=int, required=True)
    s.add_argument("--targets", help="comma-separated node ids (default: all)")
    s.set_defaults(func=cmd_rollout)

    s = sub.add_parser("sequence", help="ordered startup or shutdown over a dependency DAG")
    s.add_argument("--dag", required=True)
    s.add_argument("--direction", choices=("startup", "shutdown"), required=True)
    s.add_argument("--retries", type=int, default=0)
    s.set_defaults(func=cmd_sequence)

    s = sub.add_parser("attest", help="attest a node's booted layers")
    s.add_argument("node")
    s.set_defaults(func=cmd_attest)

    s = sub.add_parser("metrics", help="per-request-type service statistics")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("remediate", help="apply an emergency event given as JSON")
    s.add_argument("event")
    s.set_defaults(func=cmd_remediate)

    flows = sub.add_parser("flows", help="automation flows").add_subparsers(dest="flows_cmd", required=True)
    s = flows.add_parser("add")
    s.add_argument("file")
    s.set_defaults(func=cmd_flows_add)

    sim = sub.add_parser("sim", help="offline simulation").add_subparsers(dest="sim_cmd", required=True)
    s = sim.add_parser("run", help="boot a scenario to convergence")
    s.add_argument("scenario", nargs="?")
    s.add_argument("--seed", type=int, default=None, help="overrides FLEET_SEED and the file")
    s.add_argument("--nodes", type=int, default=16, help="node count when no scenario is given")
    s.add_argument("--ticks", type=int, default=100000)
    s.add_argument("--trace", help="write the JSONL event trace here")
    s.set_defaults(func=cmd_sim_run)

    s = sub.add_parser("serve", help="run a gateway over a simulated fleet")
    s.add_argument("--scenario")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--nodes", type=int, default=16)
    s.add_argument("--listen", default=DEFAULT_ADDR)
    s.add_argument("--cluster", default="default")
    s.add_argument("--no-boot", action="store_true")
    s.add_argument("--tick-seconds", type=float, default=0.0,
                   help="advance the simulation one tick per interval (0: only on request)")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (FleetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
