import numpy as np
import pytest

from dtncolour.colouring import run_colouring
from dtncolour.simulate import (MessageSpec, batch_experiment, latencies, message_schedule,
                                records_csv, sim_epidemic, sim_spray_and_wait,
                                spray_and_wait_one)
from dtncolour.synth import HomogeneousSpec, gen_homogeneous
from dtncolour.trace import ContactTrace


@pytest.fixture(scope="module")
def small():
    return gen_homogeneous(HomogeneousSpec(5, 2e-3, 2e4, contact_duration=30, seed=31))


def random_messages(trace, rng, count, ttl=np.inf):
    out = []
    for k in range(count):
        s, d = rng.choice(trace.n, 2, replace=False)
        out.append(MessageSpec(k, int(s), int(d), float(rng.uniform(trace.t_min, trace.t_max)), ttl))
    return out


def test_isolated_dest_undelivered():
    t = ContactTrace.from_events([(0, 1, 5, 5), (1, 2, 6, 6)], n=4, horizon=(0, 10))
    (r,) = sim_epidemic(t, [MessageSpec(0, 0, 3, 1.0)])
    assert not r.delivered and r.latency is None


def test_created_inside_contact_latency_zero():
    t = ContactTrace.from_events([(0, 1, 5, 9)], horizon=(0, 10))
    (r,) = sim_epidemic(t, [MessageSpec(0, 1, 0, 7.0)])
    assert r.delivered and r.latency == 0.0
    (r,) = sim_spray_and_wait(t, [MessageSpec(0, 1, 0, 7.0)], copies=4)
    assert r.latency == 0.0


def test_ttl_marks_undelivered():
    t = ContactTrace.from_events([(0, 1, 5, 5)], horizon=(0, 10))
    assert not sim_epidemic(t, [MessageSpec(0, 0, 1, 1.0, ttl=3.0)])[0].delivered
    assert sim_epidemic(t, [MessageSpec(0, 0, 1, 1.0, ttl=4.0)])[0].latency == 4.0


def test_epidemic_matches_colouring(small, rng):
    for m in random_messages(small, rng, 1000):
        run = run_colouring(small, m.created_at, m.source)
        (r,) = sim_epidemic(small, [m])
        want = run.time_of(m.dest)
        assert (r.latency if r.delivered else None) == want


def test_single_copy_is_direct_delivery(small, rng):
    pairs = small.pairs()
    for m in random_messages(small, rng, 300):
        idx = pairs.get((min(m.source, m.dest), max(m.source, m.dest)), [])
        live = [e for s, e in zip(small.start[idx], small.end[idx]) if e >= m.created_at]
        want = None
        if live:
            k = int(np.flatnonzero(small.end[idx] >= m.created_at)[0])
            want = max(small.start[idx][k], m.created_at) - m.created_at
        (r,) = sim_spray_and_wait(small, [m], copies=1)
        assert r.latency == want


def test_enough_tokens_equals_epidemic(rng):
    # binary spray reaches everyone once every holder can keep splitting: L >= 2**(n-1)
    for seed in range(5):
        t = gen_homogeneous(HomogeneousSpec(5, 2e-3, 2e4, contact_duration=20, seed=seed))
        msgs = random_messages(t, rng, 200)
        epi = sim_epidemic(t, msgs)
        snw = sim_spray_and_wait(t, msgs, copies=2 ** 4)
        assert [r.latency for r in epi] == [r.latency for r in snw]


def test_spray_no_faster_than_epidemic(small, rng):
    msgs = random_messages(small, rng, 500)
    for variant in ("binary", "source"):
        for e, s in zip(sim_epidemic(small, msgs), sim_spray_and_wait(small, msgs, 3, variant)):
            if s.delivered:
                assert e.delivered and s.latency >= e.latency


def test_tokens_conserved(small, rng):
    for m in random_messages(small, rng, 200):
        for variant in ("binary", "source"):
            audit = []
            spray_and_wait_one(small, m, 10, variant, audit)
            assert all(total == 10 for total in audit)


def test_source_variant_only_source_sprays():
    # 0 gives a token to 1; 1 then meets 2 but cannot spray in the source variant
    t = ContactTrace.from_events([(0, 1, 1, 1), (1, 2, 2, 2), (2, 3, 3, 3), (1, 3, 4, 4)], horizon=(0, 5))
    m = MessageSpec(0, 0, 3, 0.0)
    assert spray_and_wait_one(t, m, 4, "binary") == 3.0
    assert spray_and_wait_one(t, m, 4, "source") == 4.0


def test_batch_deterministic_and_pooled(small):
    a = batch_experiment(small, 4, 7, protocol="spray", copies=3)
    b = batch_experiment(small, 4, 7, protocol="spray", copies=3)
    assert records_csv(a) == records_csv(b)
    per = [len(message_schedule(small, np.random.default_rng(ss))) for ss in np.random.SeedSequence(7).spawn(4)]
    assert len(a) == sum(per)
    assert [r.msg for r in a] == list(range(len(a)))


def test_schedule_gaps(small, rng):
    msgs = message_schedule(small, rng, gap_low=50, gap_high=100, window=10_000)
    gaps = np.diff([m.created_at for m in msgs])
    assert gaps.min() >= 50 and gaps.max() <= 100
    assert msgs[-1].created_at < 10_000
    assert all(m.source != m.dest for m in msgs)


def test_latencies_and_csv():
    recs = sim_epidemic(ContactTrace.from_events([(0, 1, 5, 5)], n=3, horizon=(0, 10)),
                        [MessageSpec(0, 0, 1, 1.0), MessageSpec(1, 0, 2, 1.0)])
    lat, und = latencies(recs)
    assert lat.tolist() == [4.0] and und == 1
    assert records_csv(recs) == "msg,delivered,latency\n0,1,4.0\n1,0,\n"


def test_bad_messages():
    t = ContactTrace.from_events([(0, 1, 5, 5)], horizon=(0, 10))
    with pytest.raises(ValueError):
        MessageSpec(0, 1, 1, 0.0)
    with pytest.raises(ValueError):
        sim_epidemic(t, [MessageSpec(0, 0, 5, 1.0)])
    with pytest.raises(ValueError):
        spray_and_wait_one(t, MessageSpec(0, 0, 1, 1.0), 0)
