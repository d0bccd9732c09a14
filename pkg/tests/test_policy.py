from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msjlab import ConfigurationError
from msjlab.policy import KINDS, PolicyConfig, decide, make_policy, policy_labels
from msjlab.state import PhaseState, SimState
from msjlab.workload import ClassSpec, WorkloadSpec


def workload(k, needs, rate=1.0):
    return WorkloadSpec(k, tuple(ClassSpec(n, rate, 1.0) for n in needs))


def admitted_needs(state, ids):
    need_of = {j: state.needs[i] for i, q in enumerate(state.queues) for j in q}
    return sorted((need_of[j] for j in ids), reverse=True)


@pytest.mark.parametrize("kind, expected", [("fcfs", []), ("first_fit", [1, 1])])
def test_head_of_line_blocking(kind, expected):
    spec = workload(8, [1, 4])
    st_ = SimState.from_queue(8, spec.needs, [4, 1, 1], in_service={1: 5})
    assert st_.free == 3
    ids, _ = decide(PolicyConfig(kind), st_, spec)
    assert admitted_needs(st_, ids) == expected


def test_fcfs_admits_in_order_until_blocked():
    spec = workload(8, [1, 4])
    st_ = SimState.from_queue(8, spec.needs, [1, 4, 1, 4, 1])
    ids, _ = decide(PolicyConfig("fcfs"), st_, spec)
    assert ids == [0, 1, 2]


def test_msf_descending_scan():
    spec = workload(5, [1, 3])
    st_ = SimState.from_queue(5, spec.needs, [1, 1, 3, 1, 3, 1])
    ids, _ = decide(PolicyConfig("msf"), st_, spec)
    assert admitted_needs(st_, ids) == [3, 1, 1]
    # the earlier 3-need job and the two earliest 1-need jobs
    assert ids == [0, 1, 2]


def test_empty_queue_admits_nothing():
    spec = workload(4, [1, 4])
    for kind in ("fcfs", "first_fit", "msf"):
        ids, phase = decide(PolicyConfig(kind), SimState.empty(4, spec.needs), spec)
        assert ids == []


def msfq_state(spec, queued, in_service=None, z="P1"):
    policy = make_policy(PolicyConfig("msfq", ell=1), spec)
    st_ = SimState.from_queue(spec.k, spec.needs, queued, in_service)
    st_.phase = PhaseState(z, policy.machine.blocked[z])
    return policy, st_


def test_msfq_serves_one_large_job_in_phase_one():
    spec = workload(4, [1, 4])
    policy, st_ = msfq_state(spec, [4, 1, 4, 1])
    ids, phase = decide(policy, st_)
    assert admitted_needs(st_, ids) == [4]
    assert phase.z == "P1" and 1 in phase.blocked


def test_msfq_phase_two_fills_servers_and_moves_on():
    spec = workload(4, [1, 4])
    policy, st_ = msfq_state(spec, [1] * 6, z="P2")
    ids, phase = decide(policy, st_)
    assert len(ids) == 4 and phase.z == "P2"
    # fewer than k small jobs left: phase 3, then phase 4 once at most ell remain
    policy, st_ = msfq_state(spec, [1, 1, 4], z="P2")
    ids, phase = decide(policy, st_)
    assert admitted_needs(st_, ids) == [1, 1]
    assert phase.z == "P3"
    policy, st_ = msfq_state(spec, [4], in_service={1: 1}, z="P3")
    ids, phase = decide(policy, st_)
    assert ids == [] and phase.z == "P4" and 1 in phase.blocked


def test_msfq_phase_four_blocks_small_then_returns_to_large():
    spec = workload(4, [1, 4])
    policy, st_ = msfq_state(spec, [1, 4], in_service={1: 1}, z="P4")
    assert decide(policy, st_) == ([], st_.phase)
    policy, st_ = msfq_state(spec, [1, 4], z="P4")
    ids, phase = decide(policy, st_)
    assert admitted_needs(st_, ids) == [4] and phase.z == "P1"


def test_msfq_threshold_k_minus_one_skips_phase_three():
    spec = workload(4, [1, 4])
    policy = make_policy(PolicyConfig("msfq", ell=3), spec)
    st_ = SimState.from_queue(4, spec.needs, [1, 1, 1], phase=policy.initial_phase())
    out = policy.decide(st_)
    # P1 -> P2 -> P3 -> P4 at once: n1 = 3 <= ell
    assert out.visited == ("P2", "P3", "P4")
    assert out.admit[0] == 3


def test_msfq_rejects_general_workloads():
    with pytest.raises(ConfigurationError, match="one-or-all"):
        make_policy(PolicyConfig("msfq", ell=1), workload(15, [1, 3, 15]))
    with pytest.raises(ConfigurationError, match="threshold"):
        make_policy(PolicyConfig("msfq", ell=4), workload(4, [1, 4]))
    with pytest.raises(ConfigurationError):
        PolicyConfig("msfq")
    with pytest.raises(ConfigurationError, match="unknown"):
        PolicyConfig("lottery")


FOUR = workload(15, [1, 3, 5, 15])


def test_static_quickswap_caps_class_in_service():
    spec = FOUR
    st_ = SimState.from_queue(15, spec.needs, [3] * 8)
    ids, phase = decide(PolicyConfig("static_quickswap"), st_, spec)
    assert admitted_needs(st_, ids) == [3] * 5
    assert phase.z[2] == "c3:working"


def test_static_quickswap_drains_when_idle_exceeds_threshold():
    spec = FOUR
    policy = make_policy(PolicyConfig("static_quickswap"), spec)
    st_ = SimState.from_queue(15, spec.needs, [5, 1, 1], phase=policy.initial_phase())
    ids, phase = decide(policy, st_)
    # class 5 working admits its single job; 10 idle servers > k - ell = 1
    assert admitted_needs(st_, ids) == [5]
    assert phase.z[2] == "c5:draining" and 1 in phase.blocked and 5 in phase.blocked


def test_static_quickswap_skips_empty_classes():
    spec = FOUR
    policy = make_policy(PolicyConfig("static_quickswap", cycle_order=(15, 5, 3, 1)), spec)
    st_ = SimState.from_queue(15, spec.needs, [1, 1], phase=policy.initial_phase())
    ids, phase = decide(policy, st_)
    assert admitted_needs(st_, ids) == [1, 1]
    assert phase.z[2] in ("c1:working", "c1:draining")


def test_static_quickswap_validates_order():
    with pytest.raises(ConfigurationError, match="permutation"):
        make_policy(PolicyConfig("static_quickswap", cycle_order=(15, 5, 3)), FOUR)


def test_static_quickswap_single_class_is_work_conserving():
    spec = workload(4, [1])
    policy = make_policy(PolicyConfig("static_quickswap"), spec)
    st_ = SimState.from_queue(4, spec.needs, [1] * 6, phase=policy.initial_phase())
    ids, _ = decide(policy, st_)
    assert len(ids) == 4


def adaptive(queued, in_service=None, z="working"):
    policy = make_policy(PolicyConfig("adaptive_quickswap"), FOUR)
    st_ = SimState.from_queue(15, FOUR.needs, queued, in_service)
    if z == "draining":
        st_.phase = policy._draining
    else:
        st_.phase = policy.initial_phase()
    return policy, st_


def test_adaptive_no_trigger_while_served_classes_wait():
    policy, st_ = adaptive([3] * 20, in_service={3: 2})
    ids, phase = decide(policy, st_)
    assert admitted_needs(st_, ids) == [3] * 3
    assert phase.z == "working"


def test_adaptive_trigger_and_release():
    policy, st_ = adaptive([15], in_service={1: 14})
    ids, phase = decide(policy, st_)
    assert ids == [] and phase.z == "draining"
    # servers free up: the largest queued job enters and work resumes
    policy, st_ = adaptive([1, 15, 15], z="draining")
    ids, phase = decide(policy, st_)
    assert admitted_needs(st_, ids) == [15] and phase.z == "working"
    # with only the small jobs left waiting the trigger fires again at once
    policy, st_ = adaptive([1, 15, 1], z="draining")
    ids, phase = decide(policy, st_)
    assert admitted_needs(st_, ids) == [15] and phase.z == "draining"


def test_adaptive_drain_waits_for_an_arrival():
    policy, st_ = adaptive([], z="draining")
    assert decide(policy, st_) == ([], st_.phase)


def test_adaptive_ties_go_to_the_earliest_job():
    policy, st_ = adaptive([5, 5, 1], in_service={1: 10}, z="draining")
    ids, _ = decide(policy, st_)
    assert ids[0] == min(st_.queues[2])


def test_nmsr_wastes_capacity():
    spec = workload(4, [1, 4])
    policy = make_policy(PolicyConfig("nmsr_simplified", cycle_order=(1, 4)), spec, seed=1)
    phase = policy.initial_phase()
    assert phase.z[1] == "s1" and phase.timer > 0
    st_ = SimState.from_queue(4, spec.needs, [4, 4], phase=phase)
    assert decide(policy, st_) == ([], phase)


def test_nmsr_switch_is_non_preemptive():
    spec = workload(4, [1, 4])
    policy = make_policy(PolicyConfig("nmsr_simplified", cycle_order=(1, 4)), spec, seed=1)
    phase = policy.initial_phase()
    st_ = SimState.from_queue(4, spec.needs, [4, 1], in_service={1: 2}, phase=phase)
    st_.clock = phase.timer
    ids, new = decide(policy, st_)
    # now in the large schedule: the small jobs keep running, the large one must wait
    assert new.z[1] == "s4" and ids == []


def test_nmsr_defaults_follow_load_shares():
    spec = WorkloadSpec.one_or_all(32, 6.0, 0.9)
    policy = make_policy(PolicyConfig("nmsr_simplified"), spec)
    (big, m_big), (small, m_small) = policy.chain
    assert spec.needs[big] == 32 and spec.needs[small] == 1
    assert m_big / m_small == pytest.approx((32 * 0.6) / 5.4)
    assert m_big + m_small == pytest.approx(10.0)


def test_nmsr_single_schedule_is_static():
    spec = workload(4, [2])
    policy = make_policy(PolicyConfig("nmsr_simplified"), spec)
    assert policy.initial_phase().timer is None
    st_ = SimState.from_queue(4, spec.needs, [2, 2, 2], phase=policy.initial_phase())
    assert len(decide(policy, st_)[0]) == 2


def test_config_round_trip():
    cfgs = [PolicyConfig("msfq", ell=31), PolicyConfig("static_quickswap", ell=10,
                                                        cycle_order=(15, 1, 3, 5),
                                                        ell_overrides={3: 12}),
            PolicyConfig("nmsr_simplified", holding_means=(2.0, 3.0)), PolicyConfig("fcfs")]
    for c in cfgs:
        assert PolicyConfig.from_dict(c.to_dict()) == c
    assert PolicyConfig.parse("msfq:7") == PolicyConfig("msfq", ell=7)
    assert policy_labels(cfgs[:1] + [PolicyConfig("msf")]) == ["msfq(31)", "msf"]
    with pytest.raises(ConfigurationError):
        PolicyConfig.from_dict({"kind": "msf", "colour": 1})


@st.composite
def random_states(draw):
    k = draw(st.sampled_from([4, 6, 12, 15]))
    divisors = [d for d in range(1, k + 1) if k % d == 0]
    needs = sorted(draw(st.sets(st.sampled_from(divisors), min_size=1, max_size=4)))
    spec = workload(k, needs)
    queued = draw(st.lists(st.sampled_from(needs), max_size=25))
    running, used = {}, 0
    for n in draw(st.lists(st.sampled_from(needs), max_size=10)):
        if used + n <= k:
            running[n] = running.get(n, 0) + 1
            used += n
    kinds = [x for x in KINDS if x != "msfq" or spec.is_one_or_all and len(needs) == 2]
    kind = draw(st.sampled_from(kinds))
    cfg = PolicyConfig(kind, ell=draw(st.integers(0, k - 1)) if kind == "msfq" else None)
    return spec, cfg, SimState.from_queue(k, needs, queued, running)


@given(random_states())
@settings(max_examples=300, deadline=None)
def test_admissions_fit_and_keep_class_order(case):
    spec, cfg, st_ = case
    policy = make_policy(cfg, spec, seed=3)
    st_.phase = policy.initial_phase()
    ids, phase = decide(policy, st_)
    need_of = {j: st_.needs[i] for i, q in enumerate(st_.queues) for j in q}
    assert set(ids) <= set(need_of)
    assert sum(need_of[j] for j in ids) <= st_.free
    for q in st_.queues:
        taken = [j for j in q if j in set(ids)]
        assert taken == list(q)[:len(taken)]
