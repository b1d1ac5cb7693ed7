import json

import pytest

from hpcfleet.errors import AllEndpointsFailed, Unauthorized, ValidationError
from hpcfleet.gateway import (
    OK,
    TIMEOUT,
    UNAVAILABLE,
    EndpointSet,
    FailoverPolicy,
    GatewayApp,
    GatewayClient,
    GatewayServer,
    HttpTransport,
    Request,
    Router,
    SimClock,
    SimNetwork,
    call_with_failover,
)
from hpcfleet.gateway.cli import main
from hpcfleet.metrics import ServiceMetrics
from hpcfleet.provisim import Scenario
from hpcfleet.runtime import ClusterRuntime

IMAGES = [{"id": "mos-1", "kind": "minimal_os", "layers": [{"name": "k", "size": 10}]},
          {"id": "mos-2", "kind": "minimal_os", "layers": [{"name": "k", "size": 11}]}]


@pytest.fixture
def router():
    rt = ClusterRuntime(Scenario.from_dict({"seed": 1, "generate": {"count": 4}, "images": IMAGES}))
    rt.deploy("mos-1")
    assert rt.run_until(rt.all_ready, 500)
    return Router(rt, ServiceMetrics())


def sim_pair(router, rtt=1.0):
    clock = SimClock()
    net = SimNetwork(clock, rtt)
    net.apps = {"a:1": GatewayApp(router), "b:1": GatewayApp(router)}
    return clock, net


def test_unavailable_signal_fails_over_without_waiting(router):
    clock, net = sim_pair(router)
    net.apps["a:1"].available = False
    res = call_with_failover(Request("GET", "/v1/metrics"), ["a:1", "b:1"],
                             FailoverPolicy(deadline=30.0), net, clock)
    assert [a.signal for a in res.attempts] == [UNAVAILABLE, OK]
    assert res.failover_latency == 1.0
    assert clock.now == 2.0


def test_first_endpoint_answers(router):
    clock, net = sim_pair(router)
    res = call_with_failover(Request("GET", "/v1/metrics"), ["a:1", "b:1"], FailoverPolicy(), net, clock)
    assert len(res.attempts) == 1 and res.response.status == 200


def test_all_unavailable(router):
    clock, net = sim_pair(router)
    for app in net.apps.values():
        app.available = False
    with pytest.raises(AllEndpointsFailed) as exc:
        call_with_failover(Request("GET", "/v1/metrics"), ["a:1", "b:1"], FailoverPolicy(max_attempts=3),
                           net, clock)
    assert [(a.endpoint, a.signal) for a in exc.value.attempts] == \
        [("a:1", UNAVAILABLE), ("b:1", UNAVAILABLE), ("a:1", UNAVAILABLE)]


def test_silent_endpoint_costs_the_deadline(router):
    clock, net = sim_pair(router)
    net.silent.add("a:1")
    res = call_with_failover(Request("GET", "/v1/metrics"), ["a:1", "b:1"], FailoverPolicy(deadline=7.0),
                             net, clock)
    assert res.attempts[0].signal == TIMEOUT and res.failover_latency == 7.0


def test_client_errors_do_not_fail_over(router):
    clock, net = sim_pair(router)
    res = call_with_failover(Request("GET", "/v1/facts/node/zz/phase"), ["a:1", "b:1"],
                             FailoverPolicy(), net, clock)
    assert res.response.status == 404 and len(res.attempts) == 1


def test_policy_rotation_is_deterministic():
    p = FailoverPolicy(rotation="hashed")
    assert p.order(["a", "b", "c"], "/x") == p.order(["a", "b", "c"], "/x")
    assert sorted(p.order(["a", "b", "c"], "/x")) == ["a", "b", "c"]
    with pytest.raises(ValidationError):
        FailoverPolicy(max_attempts=0)


def test_rollout_routes_to_orchestrator(router, monkeypatch):
    calls = []
    real = router.rt.orch.rolling_update
    monkeypatch.setattr(router.rt.orch, "rolling_update",
                        lambda *a, **k: calls.append((a, k)) or real(*a, **k))
    out = router.apply_command({"op": "rollout", "image": "mos-2", "max_unavailable": 3})
    assert calls and calls[0][0] == ("mos-2", 3)
    assert out["status"] == "running"


def test_get_routes_to_store(router, monkeypatch):
    seen = []
    real = router.rt.store.get
    monkeypatch.setattr(router.rt.store, "get", lambda *a, **k: seen.append(a) or real(*a, **k))
    out = router.apply_command({"op": "get", "key": "node/n0/power"})
    assert out["value"] == "on" and seen


def test_zero_max_unavailable_rejected_before_orchestrator(router, monkeypatch):
    monkeypatch.setattr(router.rt.orch, "rolling_update", lambda *a, **k: pytest.fail("reached"))
    with pytest.raises(ValidationError):
        router.apply_command({"op": "rollout", "image": "mos-2", "max_unavailable": 0})
    with pytest.raises(ValidationError):
        router.apply_command({"op": "rollout", "image": "mos-2", "max_unavailable": "3"})
    with pytest.raises(ValidationError):
        router.apply_command({"op": "teleport"})


def test_mutations_need_the_lease(router):
    router.rt.kill_orchestrator()
    with pytest.raises(Unauthorized):
        router.apply_command({"op": "rollout", "image": "mos-2", "max_unavailable": 1})
    # reads still work
    router.apply_command({"op": "diff", "entity": "n0"})


def test_every_request_is_counted(router):
    router.apply_command({"op": "diff", "entity": "n0"})
    with pytest.raises(Exception):
        router.apply_command({"op": "get", "key": "node/none/phase"})
    app = GatewayApp(router)
    status, _, _ = app.handle("POST", "/v1/orchestrate/rollout", b"not json")
    assert status == 400
    snap = {p["type"]: p for p in router.metrics.to_json()}
    assert (snap["diff"]["requests"], snap["diff"]["failures"]) == (1, 0)
    assert (snap["get"]["requests"], snap["get"]["failures"]) == (1, 1)
    assert (snap["rollout"]["requests"], snap["rollout"]["failures"]) == (1, 1)


def test_http_routes(router):
    app = GatewayApp(router)

    def call(method, path, body=None):
        status, headers, out = app.handle(method, path, b"" if body is None else json.dumps(body).encode())
        return status, json.loads(out)

    assert call("GET", "/v1/facts/node/n0/phase")[1]["result"]["value"] == "ServicesReady"
    status, out = call("PUT", "/v1/desires", {"desires": [{"key": "service/dns/replicas", "value": 2}]})
    assert status == 200
    assert call("GET", "/v1/diff/dns")[1]["result"][0]["desire"] == 2
    assert call("POST", "/v1/sim/run", {"ticks": 3})[0] == 200
    assert call("GET", "/v1/diff/dns")[1]["result"] == []
    assert call("POST", "/v1/remediate", {"kind": "dance"})[0] == 422
    assert call("POST", "/v1/flows", {"name": "f", "trigger": {"key": "phase", "value": "Faulted"},
                                      "actions": ["power_cycle"]})[1]["result"] == {"id": "f"}
    assert call("GET", "/v1/attest/n1")[1]["result"]["verdict"] == "pass"
    assert call("POST", "/v1/sim/fault", {"kind": "crash", "node": "n999"})[0] == 404
    assert call("DELETE", "/v1/metrics")[0] == 405
    assert call("GET", "/v1/nothing")[0] == 404
    layers = [{"layer": "base", "precedence": "base",
               "values": {"groups": {"all": {"select": "*", "image": "mos-2"}}}}]
    status, out = call("PUT", "/v1/desires", {"layers": layers})
    assert status == 200 and out["result"]["written"] == 4


def test_sequence_route(router):
    app = GatewayApp(router)
    body = {"dag": {"vertices": ["db", "api"], "edges": [["db", "api"]]}, "direction": "startup"}
    status, _, out = app.handle("POST", "/v1/orchestrate/sequence", json.dumps(body).encode())
    assert status == 200 and json.loads(out)["result"]["order"] == ["db", "api"]
    assert router.rt.fact("service", "api", "state") == "running"


def test_unavailable_carries_failover_header(router):
    status, headers, _ = GatewayApp(router, available=False).handle("GET", "/v1/metrics")
    assert status == 503 and headers["X-Failover"] == "true"


def test_real_servers_publish_and_fail_over(router):
    a = GatewayServer(GatewayApp(router)).start()
    b = None
    try:
        client = GatewayClient(a.address, FailoverPolicy(deadline=5.0), HttpTransport(), refresh=0.0)
        assert client.call("GET", "/v1/metrics").status == 200
        assert list(client.known) == [a.address]
        b = GatewayServer(GatewayApp(router)).start()
        assert set(client.endpoints()) == {a.address, b.address}
        a.app.available = False        # still listed, but answers with the failover signal
        resp = client.call("GET", "/v1/facts/node/n0/phase")
        assert resp.status == 200 and resp.body["result"]["value"] == "ServicesReady"
        a.set_available(False)
        assert list(EndpointSet.from_store(router.rt.store)) == [b.address]
    finally:
        a.stop()
        if b is not None:
            b.stop()
    assert list(EndpointSet.from_store(router.rt.store)) == []


def test_cli_against_a_live_gateway(router, capsys, tmp_path):
    srv = GatewayServer(GatewayApp(router)).start()
    try:
        assert main(["--addr", srv.address, "get", "node/n0/phase"]) == 0
        assert json.loads(capsys.readouterr().out)["value"] == "ServicesReady"
        assert main(["--addr", srv.address, "rollout", "--image", "mos-2", "--max-unavailable", "0"]) == 1
        assert "ValidationError" in capsys.readouterr().err
        dag = tmp_path / "dag.yaml"
        dag.write_text("vertices: [db, web]\nedges: [[db, web]]\n")
        assert main(["--addr", srv.address, "sequence", "--dag", str(dag), "--direction", "startup"]) == 0
        capsys.readouterr()
        flows = tmp_path / "flows.yaml"
        flows.write_text("flows:\n  - name: cycle\n    trigger: {key: phase, value: Faulted}\n"
                         "    actions: [power_cycle]\n")
        assert main(["--addr", srv.address, "flows", "add", str(flows)]) == 0
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("layer: base\nprecedence: base\nvalues:\n  groups.all.select: '*'\n"
                       "  groups.all.image: mos-2\n")
        assert main(["--addr", srv.address, "apply", "-f", str(cfg)]) == 0
        capsys.readouterr()
        assert main(["--addr", srv.address, "metrics"]) == 0
        types = {p["type"] for p in json.loads(capsys.readouterr().out)}
        assert {"get", "rollout", "sequence", "flows_add", "apply"} <= types
    finally:
        srv.stop()


def test_cli_sim_run(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("FLEET_SEED", "9")
    trace = tmp_path / "t.jsonl"
    assert main(["sim", "run", "--nodes", "3", "--trace", str(trace)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["seed"] == 9 and out["converged"] and out["phases"] == {"ServicesReady": 3}
    assert trace.read_text().count("\n") > 3


def test_cli_unreachable_gateway(capsys):
    assert main(["--addr", "127.0.0.1:1", "--timeout", "0.5", "metrics"]) == 3
