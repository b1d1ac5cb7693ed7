import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpcfleet.configlayers import (
    ConfigLayer,
    Keyring,
    Renderer,
    SecretStore,
    dump_layers,
    load_layers,
    merge_layers,
    render_desires,
    seal_secret,
    unseal_secret,
)
from hpcfleet.configlayers.secrets import SealedSecret
from hpcfleet.errors import (
    AmbiguousPrecedence,
    IntegrityError,
    KeyNotFound,
    UnknownImage,
    ValidationError,
)
from hpcfleet.statestore import Kind, StateKey, StateStore

FLEET = ["n1", "n2", "n3"]


def test_single_base_layer():
    base = ConfigLayer("base", "base", {"a": {"b": 1}, "c": "x"})
    eff = merge_layers([base])
    assert eff.values == {"a.b": 1, "c": "x"}
    assert set(eff.winners.values()) == {"base"}


def test_node_layer_beats_site():
    site = ConfigLayer("site", "site", {"k": 1})
    node = ConfigLayer("n1-tweak", "node", {"k": 2}, scope="n1")
    eff = merge_layers([node, site])
    assert eff.get("k", node="n1") == 2
    assert eff.winner("k", node="n1") == "n1-tweak"
    assert eff.get("k", node="n2") == 1


def test_same_precedence_conflict():
    with pytest.raises(AmbiguousPrecedence):
        merge_layers([ConfigLayer("s1", "site", {"k": 1}), ConfigLayer("s2", "site", {"k": 2})])


def test_node_layers_for_different_nodes_do_not_conflict():
    eff = merge_layers([ConfigLayer("a", "node", {"k": 1}, scope="n1"),
                        ConfigLayer("b", "node", {"k": 2}, scope="n2")])
    assert eff.get("k", node="n1") == 1 and eff.get("k", node="n2") == 2
    with pytest.raises(AmbiguousPrecedence):
        merge_layers([ConfigLayer("a", "node", {"k": 1}, scope="n1"),
                      ConfigLayer("b", "node", {"k": 2}, scope="n1")])


def test_bad_layers_rejected():
    with pytest.raises(ValidationError):
        ConfigLayer("x", "cluster", {})
    with pytest.raises(ValidationError):
        ConfigLayer("x", "node", {})


def test_layer_file_round_trip(tmp_path):
    layers = [ConfigLayer("base", "base", {"z": 1, "a": {"b": [1, 2]}}),
              ConfigLayer("n1", "node", {"image": "v2"}, scope="n1")]
    p = tmp_path / "stack.yaml"
    dump_layers(layers, p)
    text = p.read_text()
    assert text.index("a.b") < text.index("z:")
    again = load_layers(p)
    assert again == layers
    assert [l.version for l in again] == [l.version for l in layers]


def naive_effective(stack, node):
    """Scan every layer for every key; highest precedence wins."""
    rank = {"base": 0, "site": 1, "system": 2, "node": 3}
    keys = {k for l in stack for k in l.values}
    out = {}
    for k in keys:
        best = None
        for l in stack:
            if l.precedence == "node" and l.scope != node:
                continue
            if k in l.values and (best is None or rank[l.precedence] > rank[best.precedence]):
                best = l
        if best is not None:
            out[k] = best.values[k]
    return out


def ambiguous(stack):
    seen = set()
    for l in stack:
        for k in l.values:
            tag = (l.precedence, l.scope, k)
            if tag in seen:
                return True
            seen.add(tag)
    return False


layer_strategy = st.builds(
    lambda prec, node, vals: (prec, node if prec == "node" else None, vals),
    st.sampled_from(["base", "site", "system", "node"]),
    st.sampled_from(["n1", "n2"]),
    st.dictionaries(st.sampled_from(["a", "b", "c", "d", "e"]), st.integers(0, 9), max_size=4),
)


@given(st.lists(layer_strategy, max_size=7))
@settings(max_examples=300)
def test_precedence_law(specs):
    stack = [ConfigLayer(f"L{i}", p, v, scope=s) for i, (p, s, v) in enumerate(specs)]
    if ambiguous(stack):
        with pytest.raises(AmbiguousPrecedence):
            merge_layers(stack)
        return
    eff = merge_layers(stack)
    for node in ("n1", "n2", "n3"):
        assert eff.for_node(node) == naive_effective(stack, node)


@given(st.dictionaries(st.sampled_from("abc"), st.integers(), max_size=3), st.integers())
def test_node_override_survives_unrelated_base_changes(base_vals, new):
    node = ConfigLayer("pin", "node", {"k": "pinned"}, scope="n1")
    base_vals = {**base_vals, "k": new}
    eff = merge_layers([ConfigLayer("base", "base", base_vals), node])
    assert eff.get("k", node="n1") == "pinned"


# -- rendering -----------------------------------------------------------------------

def _stack(image="v2"):
    return [
        ConfigLayer("base", "base", {"groups": {"compute": {"select": "n*", "image": image,
                                                           "phase": "ServicesReady"}},
                                     "services": {"dns": {"replicas": 3}}}),
    ]


def test_group_fanout():
    eff = merge_layers(_stack())
    store = StateStore()
    r = Renderer(store, images={"v1", "v2"})
    res = r.render(eff, FLEET)
    imgs = [store.peek(StateKey("node", n, "image"), Kind.DESIRE) for n in FLEET]
    assert [d.value for d in imgs] == ["v2"] * 3
    assert {d.origin for d in imgs} == {res.render_id}
    assert store.value(StateKey("service", "dns", "replicas"), Kind.DESIRE) == 3


def test_rerender_unchanged_is_empty():
    eff = merge_layers(_stack())
    store = StateStore()
    r = Renderer(store, images={"v2"})
    r.render(eff, FLEET)
    snap = store.snapshot_bytes()
    res = r.render(eff, FLEET)
    assert not res.changeset
    assert res.written == ()
    assert store.snapshot_bytes() == snap


def test_changeset_tracks_add_modify_remove():
    store = StateStore()
    r = Renderer(store, images={"v1", "v2"})
    r.render(merge_layers(_stack("v1")), FLEET)
    res = r.render(merge_layers(_stack("v2")), ["n1", "n2"])
    assert [str(k) for k in res.changeset.modified] == ["node/n1/image", "node/n2/image"]
    assert {str(k) for k in res.changeset.removed} == {"node/n3/image", "node/n3/phase"}
    assert store.peek(StateKey("node", "n3", "image"), Kind.DESIRE) is None
    log = r.log.records()
    assert [e["render_id"] for e in log] == ["r1", "r2"]


def test_unknown_image():
    with pytest.raises(UnknownImage):
        render_desires(merge_layers(_stack("ghost")), FLEET, images={"v1"})


def test_node_layer_overrides_group_image():
    stack = _stack() + [ConfigLayer("hold", "node", {"image": "v1"}, scope="n2")]
    d = render_desires(merge_layers(stack), FLEET, images={"v1", "v2"})
    assert d[StateKey("node", "n2", "image")] == "v1"
    assert d[StateKey("node", "n1", "image")] == "v2"


def test_bad_phase_rejected():
    stack = [ConfigLayer("b", "base", {"groups": {"g": {"nodes": ["n1"], "phase": "Flying"}}})]
    with pytest.raises(ValidationError):
        render_desires(merge_layers(stack), FLEET)


# -- secrets --------------------------------------------------------------------------

@pytest.fixture
def ring():
    k = Keyring()
    k.generate("k1")
    return k


def test_seal_round_trip(ring):
    s = seal_secret("hunter2", "k1", ring)
    assert unseal_secret(s, ring) == b"hunter2"


def test_nonce_uniqueness(ring):
    a, b = seal_secret("same", "k1", ring), seal_secret("same", "k1", ring)
    assert a.nonce != b.nonce and a.ciphertext != b.ciphertext


def test_unknown_key(ring):
    with pytest.raises(KeyNotFound):
        seal_secret("x", "nope", ring)
    s = seal_secret("x", "k1", ring)
    with pytest.raises(KeyNotFound):
        unseal_secret(s, Keyring())


def test_tamper_detected(ring):
    s = seal_secret("secret-value", "k1", ring)
    bad = SealedSecret(s.key_id, s.nonce, bytes([s.ciphertext[0] ^ 1]) + s.ciphertext[1:], s.tag)
    with pytest.raises(IntegrityError):
        unseal_secret(bad, ring)


def test_keyring_and_store_persist_without_plaintext(tmp_path, ring):
    ring.save(tmp_path / "ring.json")
    ring2 = Keyring.load(tmp_path / "ring.json")
    store = SecretStore(ring2)
    store.put("db", "pa55-word-xyz", "k1")
    store.save(tmp_path / "secrets.json")
    assert b"pa55-word-xyz" not in (tmp_path / "secrets.json").read_bytes()
    again = SecretStore.load(tmp_path / "secrets.json", ring2)
    assert again.reveal("db") == b"pa55-word-xyz"


def test_render_uses_sealed_reference(tmp_path, ring):
    secrets = SecretStore(ring)
    sealed = secrets.put("dns-key", "very-secret-token", "k1")
    stack = [ConfigLayer("b", "base", {"services": {"dns": {"credential": "secret:dns-key"}}})]
    store = StateStore()
    r = Renderer(store, secrets=secrets, log_path=tmp_path / "render.log")
    r.render(merge_layers(stack), FLEET)
    assert store.value(StateKey("service", "dns", "credential"), Kind.DESIRE) == sealed.ref
    assert b"very-secret-token" not in (tmp_path / "render.log").read_bytes()
    assert b"very-secret-token" not in store.audit.to_bytes()
