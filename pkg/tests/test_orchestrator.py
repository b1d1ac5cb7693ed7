from collections import Counter, deque

import pytest

from hpcfleet.errors import (
    CheckpointInvalid,
    CyclicDependency,
    DuplicateName,
    InvalidPlan,
    LeaseLost,
    OrchestratorKilled,
    ReadinessFailed,
    UnknownEventKind,
    ValidationError,
)
from hpcfleet.fleetmodel import MutationGraph, NodePhase
from hpcfleet.orchestrator import (
    CheckpointStore,
    DependencyDag,
    FlowDefinition,
    Orchestrator,
    ReconcileConfig,
    load_flows,
    run_sequence,
)
from hpcfleet.provisim import Scenario
from hpcfleet.runtime import ClusterRuntime
from hpcfleet.statestore import Kind, StateKey

IMAGES = [{"id": "mos-1", "kind": "minimal_os", "layers": [{"name": "k", "size": 100}, {"name": "r", "size": 50}]},
          {"id": "mos-2", "kind": "minimal_os", "layers": [{"name": "k", "size": 101}, {"name": "r", "size": 50}]}]
UP = {NodePhase.SERVICES_READY, NodePhase.JOB_RUNNING}


def booted(count, parallel=64, **kw):
    d = {"seed": 3, "generate": {"count": count}, "images": IMAGES, "straggler_rate": 0.0}
    d.update(kw.pop("scenario", {}))
    rt = ClusterRuntime(Scenario.from_dict(d), config=ReconcileConfig(max_parallel_actions=parallel), **kw)
    rt.deploy("mos-1")
    assert rt.run_until(rt.all_ready, 2000)
    return rt


def peak_unavailable(trace, since):
    down, peak = set(), 0
    for r in trace:
        if r["ev"] == "phase" and r["t"] > since:
            (down.discard if NodePhase(r["to"]) in UP else down.add)(r["node"])
            peak = max(peak, len(down))
    return peak


def test_config_validation():
    with pytest.raises(ValidationError):
        ReconcileConfig(max_parallel_actions=0)


def test_converged_fleet_dispatches_nothing():
    rt = booted(4)
    assert rt.orch.reconcile_once() == []
    rt.run(20)
    assert rt.orch.reconcile_once() == []


def reimage_oracle(graph):
    """Shortest action sequence ServicesReady -> ServicesReady that loads an image."""
    start = (NodePhase.SERVICES_READY, False)
    seen = {start: []}
    q = deque([start])
    while q:
        phase, loaded = q.popleft()
        for e in graph.edges:
            if e.external or phase not in (e.src if isinstance(e.src, tuple) else (e.src,)):
                continue
            nxt = (e.dst, loaded or e.action == "load_minimal_os")
            if nxt not in seen:
                seen[nxt] = seen[(phase, loaded)] + [e.action]
                q.append(nxt)
    return seen[(NodePhase.SERVICES_READY, True)]


def test_image_diff_follows_the_reimage_path():
    rt = booted(1)
    node = rt.node_ids[0]
    rt.store.register_origin("manual", "render")
    rt.store.put_desire(StateKey("node", node, "image"), "mos-2", "manual")
    before = len(rt.orch.dispatched)
    rt.run_until(lambda: rt.fact("node", node, "image") == "mos-2" and rt.all_ready(), 500)
    actions = [d.action for d in rt.orch.dispatched[before:]]
    assert actions == reimage_oracle(rt.sim.graph)


def test_budget_caps_dispatches_per_pass():
    rt = booted(5, parallel=2)
    rt.store.register_origin("manual", "render")
    for n in rt.node_ids:
        rt.store.put_desire(StateKey("node", n, "image"), "mos-2", "manual")
    assert len(rt.orch.reconcile_once()) == 2


def test_rolling_update_single_node():
    rt = booted(1)
    task = rt.orch.rolling_update("mos-2", 1)
    assert rt.run_until(lambda: task.status != "running", 500)
    rep = task.report()
    assert rep.status == "complete" and rep.updated == rt.node_ids


def test_rolling_update_respects_bound():
    rt = booted(10)
    t0 = rt.now
    task = rt.orch.rolling_update("mos-2", 3)
    assert rt.run_until(lambda: task.status != "running", 2000)
    assert peak_unavailable(rt.sim.trace, t0) <= 3
    assert all(rt.fact("node", n, "image") == "mos-2" for n in rt.node_ids)


def test_rolling_update_rejects_zero():
    rt = booted(1)
    with pytest.raises(InvalidPlan):
        rt.orch.rolling_update("mos-2", 0)
    with pytest.raises(InvalidPlan):
        rt.orch.rolling_update("nope", 1)


def test_rolling_update_drains_running_jobs():
    rt = booted(3)
    for n in rt.node_ids:
        rt.sim.schedule_job(n, rt.now + 1, 30)
    rt.run(3)
    assert all(rt.phase(n) is NodePhase.JOB_RUNNING for n in rt.node_ids)
    task = rt.orch.rolling_update("mos-2", 1)
    assert rt.run_until(lambda: task.status != "running", 2000)
    changes = [(r["frm"], r["action"]) for r in rt.sim.trace if r["ev"] == "phase" and r["frm"] == "JobRunning"]
    assert changes and all(a in ("drain", "job_complete") for _, a in changes)
    assert not [r for r in rt.sim.trace if r["ev"] == "job_end" and r["killed"]]


def test_rolling_update_reports_faulted_nodes_and_continues():
    rt = booted(4, scenario={"images": IMAGES})
    bad = rt.node_ids[1]
    rt.sim.inject_fault({"kind": "corrupt_layer", "node": bad, "layer": 0})
    task = rt.orch.rolling_update("mos-2", 2)
    assert rt.run_until(lambda: task.status != "running", 2000)
    rep = task.report()
    assert rep.status == "partial" and rep.failed == [bad]
    assert rt.phase(bad) is NodePhase.QUARANTINED
    assert sorted(rep.updated) == sorted(set(rt.node_ids) - {bad})


def test_unrelated_render_never_interrupts_jobs():
    rt = booted(2)
    for n in rt.node_ids:
        rt.sim.schedule_job(n, rt.now + 1, 40)
    rt.run(3)
    rt.deploy("mos-2")
    rt.run(20)
    assert all(rt.phase(n) is NodePhase.JOB_RUNNING for n in rt.node_ids)
    assert rt.run_until(lambda: all(rt.fact("node", n, "image") == "mos-2" for n in rt.node_ids), 500)


def test_dag_order():
    dag = DependencyDag(["a", "b"], [("a", "b")])
    started = []
    assert run_sequence(dag, "startup", started.append, lambda v: True).order == ["a", "b"]
    assert run_sequence(dag, "shutdown", started.append, lambda v: True).order == ["b", "a"]


def test_dag_cycle():
    with pytest.raises(CyclicDependency):
        DependencyDag(["a", "b"], [("a", "b"), ("b", "a")])


def test_dag_readiness_failure_blocks_dependents():
    dag = DependencyDag.from_dict({"vertices": ["a", "b", "c"], "edges": [["a", "b"]]})
    started = []
    with pytest.raises(ReadinessFailed) as exc:
        run_sequence(dag, "startup", started.append, lambda v: v != "a", retries=0)
    assert "b" not in started and exc.value.vertex == "a"
    assert exc.value.report.results == {"a": "failed", "b": "skipped", "c": "ok"}


def test_remediation_events():
    rt = booted(2)
    (rec,) = rt.orch.remediate({"kind": "revoke_access", "user": "mallory"})
    assert rec.key == StateKey("cluster", "access", "deny:mallory")
    assert rt.store.origin_kind(rec.origin) == "emergency"
    rt.orch.remediate({"kind": "firewall_rule", "rule": "deny 10.0.0.0/8"})
    rt.orch.remediate({"kind": "firewall_rule", "rule": "deny 192.0.2.0/24"})
    assert rt.store.value(StateKey("cluster", "firewall", "rules"), Kind.DESIRE) == \
        "deny 10.0.0.0/8;deny 192.0.2.0/24"
    with pytest.raises(UnknownEventKind):
        rt.orch.remediate({"kind": "dance"})
    rt.run(2)
    assert rt.fact("cluster", "access", "deny:mallory") is True
    assert rt.orch.reconcile_once() == []


def test_emergency_diffs_go_first():
    rt = booted(6, parallel=3)
    rt.store.register_origin("manual", "render")
    for n in rt.node_ids:
        rt.store.put_desire(StateKey("node", n, "image"), "mos-2", "manual")
    rt.orch.remediate({"kind": "emergency_patch", "image": "mos-2", "nodes": [rt.node_ids[-1]]})
    rt.orch.remediate({"kind": "revoke_access", "user": "eve"})
    out = rt.orch.reconcile_once()
    assert [d.emergency for d in out] == [True, True, False]
    assert {d.entity for d in out[:2]} == {("cluster", "access"), ("node", rt.node_ids[-1])}


def run_rollout(tmp_path, kill_at_cursor=None):
    rt = booted(8, checkpoint_dir=tmp_path)
    t0 = rt.now
    task = rt.orch.rolling_update("mos-2", 2, task_id="up")
    if kill_at_cursor is not None:
        assert rt.run_until(lambda: task.cursor >= kill_at_cursor, 2000)
        rt.restart_orchestrator()
    assert rt.run_until(lambda: rt.checkpoints.latest("up")["status"] != "running", 2000)
    loads = Counter(r["node"] for r in rt.sim.trace if r["ev"] == "load_start" and r["t"] > t0)
    final = {n: (rt.phase(n), rt.fact("node", n, "image")) for n in rt.node_ids}
    return rt, loads, final


def test_resume_from_batch_two(tmp_path):
    _, _, expected = run_rollout(tmp_path / "a")
    rt, loads, final = run_rollout(tmp_path / "b", kill_at_cursor=2)
    assert final == expected
    assert set(loads.values()) == {1}
    assert rt.incarnation == 2


def test_completed_checkpoint_is_noop(tmp_path):
    rt, _, _ = run_rollout(tmp_path)
    n = len(rt.orch.dispatched)
    assert rt.orch.resume("up") is None
    rt.run(10)
    assert len(rt.orch.dispatched) == n


def test_corrupt_resume_only_checkpoint(tmp_path):
    rt = booted(4, checkpoint_dir=tmp_path)
    rt.orch.rolling_update("mos-2", 1, task_id="up")
    path = rt.checkpoints.path("up")
    rt.kill_orchestrator()
    data = bytearray(open(path, "rb").read())
    data[-3] ^= 0xFF
    open(path, "wb").write(bytes(data))
    orch = Orchestrator(rt.store, rt.sim, checkpoints=CheckpointStore(tmp_path), orch_id="o2")
    orch.acquire()
    orch.alive = True
    with pytest.raises(CheckpointInvalid):
        orch.resume("up")
    assert orch.dispatched == []
    fresh = rt.start_orchestrator()
    assert "up" in fresh.blocked_tasks and "up" not in fresh.tasks


def test_corrupt_safe_to_repeat_task_restarts(tmp_path):
    store = CheckpointStore(tmp_path)
    store.append("seq", {"type": "begin", "kind": "sequence"})
    with open(store.path("seq"), "r+b") as fh:
        fh.seek(-1, 2)
        fh.write(b"\x00")
    rt = booted(1, checkpoint_dir=tmp_path)
    assert rt.orch.resume("seq", kind="sequence", restart=lambda: "restarted") == "restarted"


def test_flow_registration():
    rt = booted(1)
    (reboot_on_fault, _) = load_flows()
    assert rt.orch.register_flow(reboot_on_fault) == "reboot-on-fault"
    with pytest.raises(DuplicateName):
        rt.orch.register_flow(reboot_on_fault)
    with pytest.raises(ValidationError):
        rt.orch.register_flow(FlowDefinition.from_dict(
            {"name": "w", "trigger": {"key": "phase", "value": "Faulted"}, "actions": ["warp"]}))


def test_reboot_on_fault_fires():
    flows = [f for f in load_flows() if f.name == "reboot-on-fault"]
    rt = booted(2, flows=flows)
    node = rt.node_ids[0]
    rt.sim.inject_fault({"kind": "crash", "node": node, "at": rt.now + 1})
    rt.run(2)
    assert rt.phase(node) is not NodePhase.SERVICES_READY
    assert rt.run_until(lambda: rt.phase(node) is NodePhase.SERVICES_READY, 200)
    assert "power_cycle" in [d.action for d in rt.orch.dispatched if d.entity == ("node", node)]


def test_retry_limit_gives_up():
    rt = booted(1)
    node = rt.node_ids[0]
    rt.sim.switches[0].ra = False          # every net boot now times out
    rt.sim.inject_fault({"kind": "crash", "node": node, "at": rt.now + 1})
    rt.run(300)
    assert rt.phase(node) is NodePhase.FAULTED
    assert node in rt.orch.gave_up
    cycles = [d for d in rt.orch.dispatched if d.entity == ("node", node) and d.action == "power_cycle"]
    assert len(cycles) == rt.config.max_retries


def test_lost_lease_stops_the_loop():
    rt = booted(2)
    old = rt.orch
    Orchestrator(rt.store, rt.sim, orch_id="usurper").start()
    with pytest.raises(LeaseLost):
        old.reconcile_once()


def test_kill_between_intent_and_dispatch():
    rt = booted(2)
    rt.store.register_origin("manual", "render")
    node = rt.node_ids[0]
    rt.store.put_desire(StateKey("node", node, "image"), "mos-2", "manual")

    def hook(stage):
        if stage == "before_dispatch":
            raise OrchestratorKilled()
    rt.orch.fault_hook = hook
    rt.run(1)
    assert rt.orch is None
    assert rt.fact("orch", node, "intent") is not None
    intent = rt.fact("orch", node, "intent").split("|")[0]
    assert rt.fact("prov", node, "accepted") != intent
    rt.start_orchestrator()
    assert rt.run_until(lambda: rt.fact("node", node, "image") == "mos-2" and rt.all_ready(), 500)
