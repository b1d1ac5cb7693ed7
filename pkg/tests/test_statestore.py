import threading

import pytest
from hypothesis import given, settings, strategies as st

from hpcfleet.errors import (
    ConsistencyMismatch,
    CrossStoreQuery,
    EpochStale,
    NotFound,
    NotOwner,
    StaleVersion,
    UnknownOrigin,
    ValidationError,
    VersionGap,
    WrongCurrentOwner,
)
from hpcfleet.framing import decode_records
from hpcfleet.statestore import (
    Condition,
    Consistency,
    KeyRange,
    Kind,
    Predicate,
    ReadMode,
    StateKey,
    StateStore,
    ready_for_reboot,
    verify_exclusivity,
    verify_monotone_versions,
)

POWER = StateKey("node", "n1", "power")


@pytest.fixture
def store():
    s = StateStore()
    s.transfer_ownership(KeyRange.namespace("node"), None, "provisioner", 1)
    s.transfer_ownership(KeyRange.namespace("job"), None, "srm", 1)
    s.register_origin("r7", "render")
    s.register_origin("r8", "render")
    return s


def test_key_ordering_is_lexicographic():
    keys = [StateKey("node", "n2", "a"), StateKey("node", "n1", "z"), StateKey("cluster", "c", "x")]
    assert sorted(keys) == [keys[2], keys[1], keys[0]]


@pytest.mark.parametrize("bad", [("", "n1", "p"), ("node", "", "p"), ("node", "n1", "")])
def test_malformed_keys_rejected(store, bad):
    with pytest.raises(ValidationError):
        store.put_desire(bad, 1, "r7")
    with pytest.raises(ValidationError):
        StateKey.of(*bad)


def test_parse_key():
    assert StateKey.parse("node/n1/power") == POWER
    with pytest.raises(ValidationError):
        StateKey.parse("node/n1")


def test_put_fact_happy_path(store):
    rec = store.put_fact("provisioner", POWER, "on", 1)
    assert rec.value == "on" and rec.version == 1 and rec.kind is Kind.FACT
    assert store.get(POWER).value == "on"


def test_put_fact_not_owner(store):
    with pytest.raises(NotOwner):
        store.put_fact("srm", POWER, "on", 1)


def test_put_fact_stale_version_leaves_store_unchanged(store):
    store.put_fact("provisioner", POWER, "on", 1)
    before = len(store.audit)
    with pytest.raises(StaleVersion):
        store.put_fact("provisioner", POWER, "off", 1)
    assert store.get(POWER).value == "on"
    assert len(store.audit) == before


def test_put_fact_version_gap(store):
    with pytest.raises(VersionGap):
        store.put_fact("provisioner", POWER, "on", 3)


def test_put_fact_archives_prior_record(store):
    store.put_fact("provisioner", POWER, "on", 1)
    store.put_fact("provisioner", POWER, "off", 2)
    puts = [p for op, p in store.audit.entries() if op == "put"]
    assert [p.value for p in puts] == ["on", "off"]


def test_put_desire_replaces_and_archives(store):
    key = StateKey("node", "n1", "image")
    store.put_desire(key, "fnv64:00000000000000aa", "r7")
    rec = store.put_desire(key, "fnv64:00000000000000bb", "r8")
    assert rec.origin == "r8"
    assert store.get(key, Kind.DESIRE).origin == "r8"
    archived = [p for op, p in store.audit.entries() if op == "put" and p.kind is Kind.DESIRE]
    assert archived[0].origin == "r7"


def test_desire_for_undiscovered_entity_accepted(store):
    rec = store.put_desire(StateKey("node", "never-seen", "phase"), "ServicesReady", "r7")
    assert rec.version == 1


def test_desire_requires_registered_origin(store):
    with pytest.raises(UnknownOrigin):
        store.put_desire(POWER, "on", "r99")


def test_strong_read_after_write(store):
    store.put_fact("provisioner", POWER, "off", 1)
    assert store.get(POWER, Kind.FACT, ReadMode.STRONG).value == "off"


def test_strong_read_of_eventual_key(store):
    key = StateKey("node", "n1", "image")
    store.put_fact("provisioner", key, "fnv64:0000000000000001", 1)
    with pytest.raises(ConsistencyMismatch):
        store.get(key, Kind.FACT, ReadMode.STRONG)
    assert store.get(key, Kind.FACT, ReadMode.LOCAL).consistency is Consistency.EVENTUAL


def test_unknown_key_not_found(store):
    with pytest.raises(NotFound):
        store.get(StateKey("node", "zz", "power"))


def test_default_policy_classes(store):
    assert store.policy.classify(POWER) is Consistency.STRONG
    assert store.policy.classify(StateKey("node", "n1", "phase")) is Consistency.STRONG
    assert store.policy.classify(StateKey("node", "n1", "image")) is Consistency.EVENTUAL
    assert store.policy.classify(StateKey("service", "dns", "config")) is Consistency.EVENTUAL


def test_diff_examples(store):
    img = StateKey("node", "n1", "image")
    store.put_fact("provisioner", img, "A")
    store.put_desire(img, "A", "r7")
    assert store.diff("n1") == []
    store.put_desire(img, "B", "r7")
    [d] = store.diff("n1")
    assert (d.key, d.fact_value, d.desire_value) == (img, "A", "B")
    phase = StateKey("node", "n1", "phase")
    store.put_desire(phase, "ServicesReady", "r7")
    entries = {d.key: d for d in store.diff("n1")}
    assert entries[phase].fact is None and entries[phase].desire_value == "ServicesReady"


def test_transfer_to_srm_revokes_provisioner(store):
    store.put_fact("provisioner", POWER, "on", 1)
    lease = store.transfer_ownership(KeyRange.single(POWER), "provisioner", "srm", 2)
    assert (lease.owner, lease.epoch) == ("srm", 2)
    with pytest.raises(NotOwner):
        store.put_fact("provisioner", POWER, "off", 2)
    assert store.put_fact("srm", POWER, "off", 1).owner == "srm"
    # the rest of the namespace stays with the provisioner
    store.put_fact("provisioner", StateKey("node", "n1", "phase"), "PoweredOn")
    store.put_fact("provisioner", StateKey("node", "n0", "power"), "on")


def test_transfer_epoch_equal_is_stale(store):
    with pytest.raises(EpochStale):
        store.transfer_ownership(KeyRange.single(POWER), "provisioner", "srm", 1)


def test_transfer_wrong_owner(store):
    with pytest.raises(WrongCurrentOwner):
        store.transfer_ownership(KeyRange.single(POWER), "srm", "orch", 5)
    with pytest.raises(WrongCurrentOwner):
        store.transfer_ownership(KeyRange.single(POWER), None, "orch", 5)


def test_bootstrap_claim():
    s = StateStore()
    lease = s.transfer_ownership(KeyRange.namespace("cluster"), None, "netctl", 1)
    assert lease.epoch == 1 and lease.owner == "netctl"


def test_transfer_over_partly_unowned_range_rejected(store):
    rng = KeyRange(("job",), ("node\x00",))  # spans an unowned gap between namespaces
    with pytest.raises(WrongCurrentOwner):
        store.transfer_ownership(rng, "provisioner", "x", 9)


def test_query_ready(store):
    store.put_fact("provisioner", StateKey("node", "n1", "phase"), "ServicesReady")
    store.put_fact("srm", StateKey("job", "n1", "count"), 0)
    res = store.query_ready(ready_for_reboot(store, "n1"))
    assert res.ready
    assert res.versions == {StateKey("node", "n1", "phase"): 1, StateKey("job", "n1", "count"): 1}
    store.put_fact("srm", StateKey("job", "n1", "count"), 1)
    res = store.query_ready(ready_for_reboot(store, "n1"))
    assert not res.ready and res.versions[StateKey("job", "n1", "count")] == 2


def test_query_across_stores_rejected(store):
    other = StateStore(store_id="secondary")
    pred = Predicate("mixed", (
        Condition(store.store_id, StateKey("node", "n1", "phase"), "==", "ServicesReady"),
        Condition(other.store_id, StateKey("node", "n1", "power"), "==", "on"),
    ))
    with pytest.raises(CrossStoreQuery):
        store.query_ready(pred)


def test_audit_persisted_as_framed_records(store, tmp_path):
    store.put_fact("provisioner", POWER, "on")
    store.put_desire(POWER, "on", "r7")
    path = tmp_path / "audit.log"
    store.audit.persist(path)
    recs = list(decode_records(path.read_bytes()))
    assert [r["op"] for r in recs] == ["lease", "lease", "put", "put"]
    assert verify_exclusivity(recs) == []


def test_concurrent_writers_serialize(store):
    keys = [StateKey("node", f"n{i}", "power") for i in range(8)]

    def writer(k):
        for _ in range(200):
            store.put_fact("provisioner", k, "on")

    threads = [threading.Thread(target=writer, args=(k,)) for k in keys]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(store.get(k).version == 200 for k in keys)
    assert verify_monotone_versions(store.audit.entries()) == []


# -- property tests over random histories -----------------------------------------

PRINCIPALS = ["provisioner", "srm", "orch"]
ENTITIES = ["n1", "n2", "n3"]
PROPS = ["power", "phase", "image"]

op_strategy = st.one_of(
    st.tuples(st.just("put"), st.sampled_from(PRINCIPALS), st.sampled_from(ENTITIES),
              st.sampled_from(PROPS), st.integers(0, 3), st.integers(0, 5)),
    st.tuples(st.just("transfer"), st.sampled_from(PRINCIPALS), st.sampled_from(ENTITIES),
              st.sampled_from(PROPS), st.sampled_from(PRINCIPALS + [None]), st.integers(1, 6)),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(op_strategy, max_size=60))
def test_random_histories_keep_invariants(ops):
    s = StateStore()
    s.transfer_ownership(KeyRange.namespace("node"), None, "provisioner", 1)
    accepted = 0
    for op in ops:
        try:
            if op[0] == "put":
                _, owner, ent, prop, val, bump = op
                key = StateKey("node", ent, prop)
                s.put_fact(owner, key, val, s.latest_version(owner, key) + (1 if bump else 0))
            else:
                _, to, ent, prop, frm, epoch = op
                s.transfer_ownership(KeyRange.single(StateKey("node", ent, prop)), frm, to, epoch)
            accepted += 1
        except (NotOwner, StaleVersion, EpochStale, WrongCurrentOwner):
            pass
    entries = s.audit.entries()
    # audit completeness: exactly one entry per accepted mutation (plus bootstrap lease)
    assert len(entries) == accepted + 1
    assert verify_exclusivity(entries) == []
    assert verify_monotone_versions(entries) == []
    # at most one lease per key
    for ent in ENTITIES:
        for prop in PROPS:
            key = StateKey("node", ent, prop)
            assert sum(1 for l in s.leases if l.key_range.contains(key)) == 1
