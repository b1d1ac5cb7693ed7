"""Command routing: one validated command in, one module operation out."""
from __future__ import annotations

import threading
import time
from typing import Optional

import yaml

from ..configlayers import ConfigLayer, merge_layers
from ..errors import FleetError, Unauthorized, ValidationError
from ..orchestrator import DependencyDag, FlowDefinition, run_sequence
from ..statestore import Kind, StateKey

MUTATING = {"apply", "put_desires", "rollout", "sequence", "remediate", "flows_add", "sim_fault",
            "sim_run"}
NEEDS_ORCHESTRATOR = {"rollout", "sequence", "remediate", "flows_add"}
GATEWAY_ORIGIN = "gateway"


def _require(cmd: dict, field: str, kind=None):
    if field not in cmd:
        raise ValidationError(f"{cmd.get('op')}: missing {field!r}")
    v = cmd[field]
    if kind is not None and (not isinstance(v, kind) or isinstance(v, bool) and kind is int):
        raise ValidationError(f"{cmd.get('op')}: {field!r} must be {kind.__name__}")
    return v


def _record_json(rec) -> Optional[dict]:
    return None if rec is None else rec.to_json()


class Router:
    """Routes commands to a ``ClusterRuntime``; every call lands in ``metrics``.

    Calls are serialized: the simulated fleet is single-threaded.
    """

    def __init__(self, runtime, metrics, sequence_ticks: int = 50):
        self.rt = runtime
        self.metrics = metrics
        self.sequence_ticks = sequence_ticks
        self._lock = threading.RLock()
        self.rt.store.register_origin(GATEWAY_ORIGIN, "render")
        self._routes = {
            "get": self._get, "diff": self._diff, "apply": self._apply, "put_desires": self._put_desires,
            "rollout": self._rollout, "sequence": self._sequence, "remediate": self._remediate,
            "flows_add": self._flows_add, "metrics": self._metrics, "sim_fault": self._sim_fault,
            "sim_run": self._sim_run, "attest": self._attest, "endpoints": self._endpoints,
        }
        for op in self._routes:
            self.metrics.register(op)

    def apply_command(self, cmd: dict):
        if not isinstance(cmd, dict):
            raise ValidationError("command must be an object")
        op = cmd.get("op")
        handler = self._routes.get(op)
        if handler is None:
            raise ValidationError(f"unknown command {op!r}")
        start = time.perf_counter()
        ok = False
        try:
            with self._lock:
                if op in NEEDS_ORCHESTRATOR:
                    self._check_lease()
                out = handler(cmd)
            ok = True
            return out
        finally:
            self.metrics.record(op, time.perf_counter() - start, "success" if ok else "failure")

    def _check_lease(self) -> None:
        orch = self.rt.orch
        if orch is None or not orch.alive or not orch.holds_lease():
            raise Unauthorized("no orchestrator holds the orchestration lease")

    # -- state store ---------------------------------------------------------------

    def _get(self, cmd):
        key = StateKey.parse(_require(cmd, "key", str))
        kind = Kind(cmd.get("kind", "fact"))
        return self.rt.store.get(key, kind).to_json()

    def _diff(self, cmd):
        entity = _require(cmd, "entity", str)
        return [{"key": list(d.key), "fact": d.fact_value, "desire": d.desire_value}
                for d in self.rt.store.diff(entity)]

    def _put_desires(self, cmd):
        desires = _require(cmd, "desires", list)
        parsed = []
        for d in desires:
            if not isinstance(d, dict) or "key" not in d or "value" not in d:
                raise ValidationError(f"desire entries need key and value: {d!r}")
            parsed.append((StateKey.parse(d["key"]), d["value"]))
        return [self.rt.store.put_desire(k, v, GATEWAY_ORIGIN).to_json() for k, v in parsed]

    def _apply(self, cmd):
        docs = _require(cmd, "layers")
        if isinstance(docs, str):
            docs = [d for d in yaml.safe_load_all(docs) if d is not None]
        if not isinstance(docs, list) or not docs:
            raise ValidationError("apply needs a non-empty list of layers")
        try:
            layers = [ConfigLayer.from_doc(d) for d in docs]
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"malformed layer: {exc}") from None
        res = self.rt.renderer.render(merge_layers(layers), self.rt.node_ids)
        return {"render_id": res.render_id, "stack_version": res.stack_version,
                "changeset": res.changeset.to_json(), "written": len(res.written)}

    # -- orchestration ---------------------------------------------------------------------

    def _rollout(self, cmd):
        image = _require(cmd, "image", str)
        m = _require(cmd, "max_unavailable", int)
        if m < 1:
            raise ValidationError("max_unavailable must be >= 1")
        targets = cmd.get("targets")
        if targets is not None and not isinstance(targets, list):
            raise ValidationError("targets must be a list of node ids")
        task = self.rt.orch.rolling_update(image, m, targets=targets, task_id=cmd.get("task_id"))
        return task.report().to_json()

    def _sequence(self, cmd):
        dag = DependencyDag.from_dict(_require(cmd, "dag", dict))
        direction = _require(cmd, "direction", str)
        want = {"startup": "running", "shutdown": "stopped"}.get(direction)
        if want is None:
            raise ValidationError("direction must be startup or shutdown")
        store = self.rt.store

        def act(v):
            store.put_desire(StateKey("service", v, "state"), want, GATEWAY_ORIGIN)

        def ready(v):
            key = StateKey("service", v, "state")
            return self.rt.run_until(lambda: store.value(key) == want, self.sequence_ticks)

        try:
            return run_sequence(dag, direction, act, ready, int(cmd.get("retries", 0))).to_json()
        except FleetError as exc:
            report = getattr(exc, "report", None)
            if report is not None:
                exc.body = report.to_json()
            raise

    def _remediate(self, cmd):
        event = _require(cmd, "event", dict)
        return [r.to_json() for r in self.rt.orch.remediate(event)]

    def _flows_add(self, cmd):
        flow = _require(cmd, "flow", dict)
        fid = self.rt.orch.register_flow(FlowDefinition.from_dict(flow))
        self.rt.flows.append(self.rt.orch.flows.flows[fid])
        return {"id": fid}

    # -- metrics, simulator -------------------------------------------------------------------

    def _metrics(self, cmd):
        return self.metrics.to_json()

    def _sim_fault(self, cmd):
        fault = _require(cmd, "fault", dict)
        return {"event": self.rt.sim.inject_fault(fault)}

    def _sim_run(self, cmd):
        ticks = _require(cmd, "ticks", int)
        if ticks < 0 or ticks > 1_000_000:
            raise ValidationError("ticks must be within 0..1000000")
        self.rt.run(ticks)
        return {"now": self.rt.now, "phases": {p.value: c for p, c in self.rt.sim.phases().items()}}

    def _attest(self, cmd):
        return self.rt.sim.attest_node(_require(cmd, "node", str)).to_json()

    def _endpoints(self, cmd):
        from .endpoints import EndpointSet
        return EndpointSet.from_store(self.rt.store, cmd.get("cluster", "default")).to_json()
