"""Simulation harness: PRNG reference vectors, scenario validation,
fault-free and adversarial runs, determinism, partition/crash semantics,
and the exhaustive small-model explorer (including its ability to catch a
deliberately broken protocol)."""
from __future__ import annotations

import pytest

from ledgerehr import consensus, ehr, ledger, netsim

SM64_SEED0 = ["e220a8397b1dcdaf", "6e789e6aa1b965f4", "06c45d188009454f", "f88bb8a8724c81ec"]
SM64_SEED42 = ["bdd732262feb6e95", "28efe333b266f103"]


def wl(tick: int, pid: str, target: int | None = None) -> netsim.WorkloadEntry:
    return netsim.WorkloadEntry(
        tick=tick,
        record=ehr.PatientRecord(patient_id=pid, name=f"Patient {pid}"),
        target=target,
    )


def test_splitmix64_reference_vectors():
    rng = netsim.SplitMix64(0)
    assert [f"{rng.next_u64():016x}" for _ in range(4)] == SM64_SEED0
    rng = netsim.SplitMix64(42)
    assert [f"{rng.next_u64():016x}" for _ in range(2)] == SM64_SEED42


def test_splitmix64_uniform_and_range():
    rng = netsim.SplitMix64(7)
    for _ in range(200):
        u = rng.uniform()
        assert 0.0 <= u < 1.0
    for _ in range(200):
        assert 1 <= rng.randrange(1, 4) <= 4


def test_scenario_json_round_trip():
    scenario = netsim.Scenario(
        n_validators=4,
        seed=99,
        drop_rate=0.1,
        delay_distribution=(1, 3),
        duplicate_rate=0.05,
        partitions=(netsim.PartitionWindow(10, 20, ((0, 1), (2, 3))),),
        crash_schedule=(netsim.CrashEvent(2, 5, 15),),
        workload=(wl(1, "a"), wl(2, "b", target=3)),
        max_ticks=200,
    )
    again = netsim.Scenario.from_json(scenario.to_json())
    assert again == scenario


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_validators": 0},
        {"drop_rate": 1.0},
        {"drop_rate": -0.1},
        {"duplicate_rate": 2.0},
        {"delay_distribution": (3, 1)},
        {"max_ticks": 0},
        {"partitions": (netsim.PartitionWindow(5, 2, ((0,), (1, 2))),)},
        {"partitions": (netsim.PartitionWindow(1, 5, ((0, 1), (1, 2))),)},
        {"crash_schedule": (netsim.CrashEvent(9, 1, None),)},
        {"crash_schedule": (netsim.CrashEvent(0, 5, 5),)},
        {"workload": (wl(1, "a", target=9),)},
    ],
)
def test_invalid_scenarios_rejected(kwargs):
    base = dict(n_validators=3, seed=1)
    base.update(kwargs)
    with pytest.raises(netsim.InvalidScenario):
        netsim.Scenario(**base).validate()


def test_single_validator_commits_and_replays_identically():
    scenario = netsim.Scenario(n_validators=1, seed=5, workload=(wl(1, "a"),), max_ticks=40)
    first = netsim.render_trace(netsim.run_scenario(scenario))
    for _ in range(9):
        assert netsim.render_trace(netsim.run_scenario(scenario)) == first
    trace = netsim.run_scenario(scenario)
    assert trace.final_chains[0].height == 1
    assert netsim.check_safety(trace).ok
    assert netsim.check_liveness(trace).verdict == "pass"


def test_fault_free_four_validators_agree_on_order():
    scenario = netsim.Scenario(
        n_validators=4,
        seed=11,
        workload=tuple(wl(1 + i, f"p{i}") for i in range(10)),
        max_ticks=300,
    )
    trace = netsim.run_scenario(scenario)
    assert netsim.check_safety(trace).ok
    assert netsim.check_liveness(trace).verdict == "pass"
    orders = [
        [tx.tx_hash for _, tx in ledger.iter_transactions(chain)]
        for chain in trace.final_chains
    ]
    assert all(order == orders[0] for order in orders)
    assert len(orders[0]) == 10


def test_trace_reproducibility_under_faults():
    scenario = netsim.Scenario(
        n_validators=5,
        seed=1234,
        drop_rate=0.25,
        delay_distribution=(1, 4),
        duplicate_rate=0.1,
        crash_schedule=(netsim.CrashEvent(1, 10, 40),),
        partitions=(netsim.PartitionWindow(15, 45, ((0, 1), (2, 3, 4))),),
        workload=(wl(1, "a"), wl(5, "b"), wl(9, "c")),
        max_ticks=500,
    )
    a = netsim.render_trace(netsim.run_scenario(scenario))
    b = netsim.render_trace(netsim.run_scenario(scenario))
    assert a == b


def test_tick_monotonicity():
    scenario = netsim.Scenario(
        n_validators=4, seed=3, drop_rate=0.1, delay_distribution=(1, 3),
        workload=(wl(1, "a"),), max_ticks=120,
    )
    trace = netsim.run_scenario(scenario)
    ticks = [e.tick for e in trace.events]
    assert ticks == sorted(ticks)


def test_partition_minority_stalls_then_heals():
    """While the quorum-breaking side is isolated it cannot commit; after the
    heal it syncs up, exactly as quorum arithmetic requires."""
    scenario = netsim.Scenario(
        n_validators=4,
        seed=21,
        partitions=(netsim.PartitionWindow(0, 60, ((0,), (1, 2, 3))),),
        workload=(wl(1, "a", target=1), wl(2, "b", target=0)),
        max_ticks=400,
    )
    trace = netsim.run_scenario(scenario)
    assert netsim.check_safety(trace).ok
    # during the partition the isolated validator must commit nothing
    minority_commits_during = [
        e for e in trace.events
        if e.kind == "commit" and e.validator == 0 and e.tick < 60
    ]
    assert minority_commits_during == []
    majority_commits_during = [
        e for e in trace.events
        if e.kind == "commit" and e.validator in (1, 2, 3) and e.tick < 60
    ]
    assert majority_commits_during  # quorum 3 of 4 lives on the big side
    assert netsim.check_liveness(trace).verdict == "pass"
    assert all(chain.height == trace.final_chains[1].height for chain in trace.final_chains)


def test_crashes_beyond_tolerance_reported_not_failed():
    scenario = netsim.Scenario(
        n_validators=4,
        seed=31,
        crash_schedule=(netsim.CrashEvent(0, 5, None), netsim.CrashEvent(1, 6, None)),
        workload=(wl(1, "a", target=2),),
        max_ticks=150,
    )
    trace = netsim.run_scenario(scenario)
    result = netsim.check_liveness(trace)
    assert result.verdict == "outside-tolerance"
    assert netsim.check_safety(trace).ok  # safety must hold regardless


def test_unhealed_partition_is_outside_tolerance():
    scenario = netsim.Scenario(
        n_validators=4,
        seed=32,
        partitions=(netsim.PartitionWindow(0, 10_000, ((0, 1), (2, 3))),),
        workload=(wl(1, "a"),),
        max_ticks=150,
    )
    trace = netsim.run_scenario(scenario)
    assert netsim.check_liveness(trace).verdict == "outside-tolerance"
    assert netsim.check_safety(trace).ok


def test_check_safety_flags_forged_divergence(org_actor):
    scenario = netsim.Scenario(n_validators=2, seed=1, workload=(wl(1, "a"),), max_ticks=60)
    trace = netsim.run_scenario(scenario)
    assert netsim.check_safety(trace).ok
    genesis = trace.final_chains[0].blocks[0]
    from conftest import make_tx

    forged_block = ledger.assemble_block(genesis, [make_tx(org_actor, 77)], 5, b"\x09" * 16)
    forged = ledger.ChainState(blocks=(genesis, forged_block))
    trace.final_chains[1] = forged
    result = netsim.check_safety(trace)
    assert not result.ok
    height, digests = result.counterexample
    assert height == 1 and len(digests) == 2


def test_campaign_scenarios_respect_bounds():
    for i in range(60):
        scenario = netsim.campaign_scenario(i)
        scenario.validate()
        assert scenario.n_validators in (4, 5, 7)
        assert scenario.drop_rate <= 0.3
        assert scenario.duplicate_rate <= 0.1
        tolerance = (scenario.n_validators - 1) // 2
        assert len(scenario.crash_schedule) <= tolerance
        for window in scenario.partitions:
            assert window.end_tick <= scenario.max_ticks


def test_campaign_sample_runs_clean():
    for i in range(40):
        trace = netsim.run_scenario(netsim.campaign_scenario(i))
        assert netsim.check_safety(trace).ok, i
        assert netsim.check_liveness(trace).verdict == "pass", i


def test_explorer_quick_pass():
    result = netsim.explore_schedules(
        n_validators=3, max_deliveries=4, max_timer_fires=1, max_crashes=1
    )
    assert result.ok
    assert result.states_explored > 1000


def test_explorer_catches_planted_lock_bug():
    """Meta-test: a protocol missing lock adoption after round changes must
    be caught by the explorer, otherwise the checker itself is worthless."""
    original = consensus.Engine._choose_draft

    def fresh_draft_only(self, height, round_):
        txs = [
            tx for tx in self._pool_order() if tx.tx_hash not in self.committed_txs
        ][: self.config.max_block_txs]
        if not txs:
            return None
        timestamp = max(self.chain.tip.header.timestamp_ms, self.clock()) + round_
        try:
            return ledger.assemble_block(
                self.chain.tip, txs, timestamp, self.me, key_of=self._actor_key
            )
        except ledger.LedgerError:
            return None

    consensus.Engine._choose_draft = fresh_draft_only
    try:
        result = netsim.explore_schedules(
            n_validators=3, max_deliveries=7, max_timer_fires=2, max_crashes=0
        )
    finally:
        consensus.Engine._choose_draft = original
    assert not result.ok
    assert "violation at height 1" in result.counterexample[-1]
