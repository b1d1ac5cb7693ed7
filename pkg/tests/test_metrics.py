import random
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpcfleet.errors import NegativeDuration, NoSamples, UnknownRequestType
from hpcfleet.metrics import LatencyHistogram, ServiceMetrics, bucket_index, nearest_rank


def test_three_successes():
    m = ServiceMetrics()
    for d in (10, 20, 30):
        m.record("get", d)
    p = m.snapshot("get")
    assert (p.requests, p.responses, p.failures) == (3, 3, 0)
    assert p.mean == 20
    assert p.median == 20 and p.p99 == 30


def test_failures_counted_separately():
    m = ServiceMetrics()
    m.record("get", 10)
    m.record("get", 12)
    m.record("get", 500, "failure")
    p = m.snapshot("get")
    assert (p.requests, p.responses, p.failures) == (3, 2, 1)
    assert m.histogram("get").total == 2


def test_negative_duration_rejected():
    with pytest.raises(NegativeDuration):
        ServiceMetrics().record("get", -1)


def test_snapshot_before_records_has_no_statistics():
    m = ServiceMetrics()
    m.register("put")
    p = m.snapshot("put")
    assert p.requests == 0 and p.mean is None and p.p50 is None and p.p99 is None
    with pytest.raises(NoSamples):
        m.quantile("put", 0.5)


def test_unknown_type():
    with pytest.raises(UnknownRequestType):
        ServiceMetrics().snapshot("nope")


def test_json_shape():
    m = ServiceMetrics()
    m.record("get", 5)
    assert set(m.to_json()[0]) == {"type", "requests", "responses", "failures", "mean", "p50", "p99"}


def test_one_to_hundred_p99():
    h = LatencyHistogram().extend(range(1, 101))
    exact = nearest_rank(list(range(1, 101)), 0.99)
    assert exact == 99
    assert abs(bucket_index(h.quantile(0.99)) - bucket_index(exact)) <= 1


@given(st.floats(0, 1e9), st.floats(0.001, 1))
def test_single_sample_is_exact(s, q):
    assert LatencyHistogram().extend([s]).quantile(q) == s


samples = st.lists(st.floats(0, 1e7, allow_nan=False), min_size=1, max_size=300)


@given(samples, st.sampled_from([0.01, 0.25, 0.5, 0.9, 0.99, 1.0]))
def test_estimate_in_same_bucket_as_exact(vals, q):
    h = LatencyHistogram().extend(vals)
    exact = nearest_rank(sorted(vals), q)
    est = h.quantile(q)
    assert bucket_index(est) == bucket_index(exact)
    if exact > 0:
        assert abs(est - exact) / exact <= 0.1


@given(samples, samples)
def test_merge_equals_concatenation(a, b):
    assert LatencyHistogram().extend(a).merge(LatencyHistogram().extend(b)) == \
        LatencyHistogram().extend(a + b)


@given(st.lists(st.tuples(st.floats(0, 1000), st.booleans()), max_size=60))
def test_counter_and_histogram_conservation(events):
    m = ServiceMetrics()
    m.register("x")
    for d, ok in events:
        m.record("x", d, "success" if ok else "failure")
    p = m.snapshot("x")
    assert p.requests == p.responses + p.failures + p.in_flight
    assert sum(m.histogram("x").counts.values()) == p.responses


def test_in_flight_requests_are_counted():
    m = ServiceMetrics()
    m.begin("slow")
    p = m.snapshot("slow")
    assert p.requests == 1 and p.in_flight == 1 and p.responses == 0
    m.end("slow", 3.0)
    assert m.snapshot("slow").in_flight == 0


def test_concurrent_recording():
    m = ServiceMetrics()
    rng = random.Random(0)
    data = [rng.random() * 100 for _ in range(4000)]

    def work(chunk):
        for d in chunk:
            m.record("c", d)

    threads = [threading.Thread(target=work, args=(data[i::4],)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    p = m.snapshot("c")
    assert p.requests == p.responses == 4000
    assert m.histogram("c") == LatencyHistogram().extend(data)
