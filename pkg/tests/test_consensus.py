"""Engine-level protocol rules: leader rotation, pool ordering, vote-once,
quorum arithmetic (exhaustively enumerated for N=4), timeouts with backoff,
and the message codec."""
from __future__ import annotations

import itertools

import pytest

from ledgerehr import consensus, ehr, identity, ledger

from conftest import make_tx, seeded_key


def build_engines(n: int, org_actor, base_timeout: int = 8, cap: int = 256):
    ids, pubs, privs = [], {}, {}
    for i in range(n):
        vid, public, private = seeded_key(b"engine-%d" % i)
        ids.append(vid)
        pubs[vid] = public
        privs[vid] = private
    vset = consensus.ValidatorSet(tuple(ids), pubs)
    org_id, org_pub, _ = org_actor
    registry = identity.Registry.bootstrap(
        [identity.StakeholderIdentity.from_public_key(org_pub, identity.Role.ORGANIZATIONAL)]
    )
    genesis = ledger.make_genesis("consensus-test", 0)
    engines = [
        consensus.Engine(
            me=ids[i],
            signing_key=privs[ids[i]],
            vset=vset,
            registry=registry,
            chain=ledger.ChainState.from_genesis(genesis),
            config=consensus.EngineConfig(
                max_block_txs=2, base_timeout_ticks=base_timeout, timeout_cap_ticks=cap
            ),
        )
        for i in range(n)
    ]
    return engines, vset


def prefill_pool(engine, *txs):
    """Pool transactions without triggering the leader's arrival-time
    proposal, as happens naturally while an earlier height is in flight."""
    key = (engine.next_height, engine.round)
    engine.proposed.add(key)
    for tx in txs:
        engine.submit_transaction(tx)
    engine.take_actions()
    engine.proposed.discard(key)


def test_leader_rotation_examples(org_actor):
    engines, vset = build_engines(4, org_actor)
    assert consensus.leader_for(0, 0, vset) == vset.validators[0]
    assert consensus.leader_for(5, 0, vset) == vset.validators[1]
    assert consensus.leader_for(5, 3, vset) == vset.validators[0]


def test_quorum_sizes(org_actor):
    for n, expected in ((1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (7, 4)):
        engines, vset = build_engines(n, org_actor)
        assert vset.quorum == expected


def test_propose_requires_leadership(org_actor):
    engines, vset = build_engines(4, org_actor)
    # height 1, round 0: leader is validators[1]
    not_leader = engines[0]
    with pytest.raises(consensus.NotLeader):
        not_leader.propose()


def test_propose_empty_pool_returns_none(org_actor):
    engines, vset = build_engines(4, org_actor)
    assert engines[1].propose() is None


def test_propose_fifo_with_cap_and_hash_tiebreak(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader = engines[1]
    tick = {"now": 10}
    leader.clock = lambda: tick["now"]
    tx_a, tx_b = make_tx(org_actor, 0), make_tx(org_actor, 1)
    tx_c = make_tx(org_actor, 2)
    # a and b arrive on the same tick (tie broken by ascending tx_hash),
    # c arrives later; max_block_txs=2 keeps only the two oldest.
    prefill_pool(leader, tx_a, tx_b)
    tick["now"] = 11
    prefill_pool(leader, tx_c)
    proposal = leader.propose()
    assert proposal is not None
    expected_first_two = sorted([tx_a, tx_b], key=lambda t: t.tx_hash)
    assert list(proposal.block.transactions) == expected_first_two


def test_handle_proposal_votes_and_rejects(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader, follower = engines[1], engines[2]
    prefill_pool(leader, make_tx(org_actor, 0))
    proposal = leader.propose()
    result = follower.handle_proposal(proposal)
    assert isinstance(result, consensus.VoteMessage)
    assert result.block_hash == ledger.block_hash(proposal.block.header)

    # wrong leader: same draft signed by a non-leader
    wrong = consensus.Proposal(
        proposal.height, proposal.round, proposal.block,
        engines[2].me, engines[2]._sign(ledger.block_hash(proposal.block.header)),
    )
    rejection = engines[3].handle_proposal(wrong)
    assert isinstance(rejection, consensus.Rejection) and rejection.reason == "wrong-leader"


def test_vote_once_rejects_conflicting_proposal(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader, follower = engines[1], engines[2]
    prefill_pool(leader, make_tx(org_actor, 0))
    first = leader.propose()
    assert isinstance(follower.handle_proposal(first), consensus.VoteMessage)

    # a different draft at the same (height, round), still leader-signed
    alt = ledger.assemble_block(
        leader.chain.blocks[0], [make_tx(org_actor, 5)], 50, leader.me
    )
    second = consensus.Proposal(
        first.height, first.round, alt, leader.me,
        leader._sign(ledger.block_hash(alt.header)),
    )
    rejection = follower.handle_proposal(second)
    assert isinstance(rejection, consensus.Rejection)
    assert rejection.reason == "already-voted"

    # the identical proposal re-delivered is answered with the same vote
    again = follower.handle_proposal(first)
    assert isinstance(again, consensus.VoteMessage)


def test_third_distinct_vote_commits(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader = engines[1]
    prefill_pool(leader, make_tx(org_actor, 0))
    proposal = leader.propose()  # leader's own vote is tallied internally
    digest = ledger.block_hash(proposal.block.header)
    vote2 = engines[2].handle_proposal(proposal)
    assert leader.handle_vote(vote2) is None  # 2 of 3: not yet
    vote3 = engines[3].handle_proposal(proposal)
    sealed = leader.handle_vote(vote3)
    assert sealed is not None
    assert leader.chain.height == 1
    assert len(sealed.commit_signatures) >= vset.quorum
    assert ledger.block_hash(sealed.header) == digest


def test_duplicate_vote_idempotent(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader = engines[1]
    prefill_pool(leader, make_tx(org_actor, 0))
    proposal = leader.propose()
    vote = engines[2].handle_proposal(proposal)
    assert leader.handle_vote(vote) is None
    assert leader.handle_vote(vote) is None  # re-delivery counts once
    tally = leader.tallies[(1, 0, vote.block_hash)]
    assert len(tally) == 2  # leader self + one follower


def test_vote_multiset_enumeration_n4():
    """Exhaustive oracle over every way 4 validators split their round votes
    between two hashes: a commit is possible iff one side reaches 3."""
    for votes_a in range(5):
        votes_b = 4 - votes_a
        commit_a = votes_a >= 3
        commit_b = votes_b >= 3
        assert not (commit_a and commit_b)  # quorums of 3 of 4 intersect
        if votes_a == 2 and votes_b == 2:
            assert not commit_a and not commit_b  # split round: no commit ever


def test_split_votes_never_commit_in_round(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader = engines[1]
    prefill_pool(leader, make_tx(org_actor, 0))
    proposal = leader.propose()
    digest = ledger.block_hash(proposal.block.header)
    other_digest = bytes(32)
    observer = engines[0]
    observer.handle_proposal(proposal)  # votes for the real draft
    # deliver two real votes and two forged-hash votes to the observer
    for voter in (engines[2], engines[3]):
        vote = consensus.VoteMessage(1, 0, other_digest, voter.me, voter._sign(other_digest))
        observer.handle_vote(vote)
    assert observer.chain.height == 0  # 2 + 2 cannot reach quorum 3


def test_handle_timeout_advances_round_with_backoff(org_actor):
    engines, vset = build_engines(4, org_actor, base_timeout=8, cap=256)
    engine = engines[0]
    engine.start()
    timers = [a for a in engine.take_actions() if isinstance(a, consensus.SetTimer)]
    assert timers[-1].duration_ticks == 8
    durations = []
    for round_ in range(4):
        engine.handle_timeout(1, round_)
        timers = [a for a in engine.take_actions() if isinstance(a, consensus.SetTimer)]
        durations.append(timers[-1].duration_ticks)
    assert durations == [16, 32, 64, 128]  # doubled each round
    assert engine.round == 4

    # three consecutive timeouts multiplied the duration by 8
    assert durations[2] == 8 * durations[0] // 2 * 2 // 2 * 2 // 2  # 64 == 8x the base


def test_handle_timeout_capped(org_actor):
    engines, _ = build_engines(4, org_actor, base_timeout=8, cap=32)
    engine = engines[0]
    for round_ in range(6):
        engine.handle_timeout(1, round_)
    timers = [a for a in engine.take_actions() if isinstance(a, consensus.SetTimer)]
    assert timers[-1].duration_ticks == 32


def test_stale_timeout_ignored(org_actor):
    engines, _ = build_engines(4, org_actor)
    engine = engines[0]
    engine.handle_timeout(1, 0)
    assert engine.round == 1
    engine.take_actions()
    engine.handle_timeout(1, 0)  # stale round
    assert engine.round == 1
    assert engine.take_actions() == []
    engine.handle_timeout(99, 1)  # stale height
    assert engine.round == 1


def test_commit_ignores_late_timeout(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader = engines[1]
    prefill_pool(leader, make_tx(org_actor, 0))
    proposal = leader.propose()
    for voter in (engines[2], engines[3]):
        leader.handle_vote(voter.handle_proposal(proposal))
    assert leader.chain.height == 1
    leader.take_actions()
    leader.handle_timeout(1, 0)  # the timer for the committed height
    assert leader.round == 0 and leader.chain.height == 1


def test_message_codec_round_trips(org_actor):
    engines, vset = build_engines(4, org_actor)
    leader = engines[1]
    tx = make_tx(org_actor, 0)
    prefill_pool(leader, tx)
    proposal = leader.propose()

    payload = consensus.encode_proposal(proposal)
    env = consensus.decode_message(payload)
    assert env.kind == consensus.MSG_PROPOSAL
    assert env.body == proposal

    vote = engines[2].handle_proposal(proposal)
    env = consensus.decode_message(consensus.encode_vote(vote))
    assert env.body == vote

    env = consensus.decode_message(consensus.encode_tx_gossip(leader.me, tx))
    assert env.body == tx

    block = leader.chain.blocks[0]
    env = consensus.decode_message(consensus.encode_commit(leader.me, block))
    assert env.body == block

    env = consensus.decode_message(consensus.encode_sync_req(leader.me, 3))
    assert env.body == 3

    env = consensus.decode_message(consensus.encode_sync_resp(leader.me, [block]))
    assert env.body == [block]


def test_new_round_report_adoption(org_actor):
    """After a timeout, the next leader must gather a quorum of round-entry
    reports and re-propose the highest reported lock."""
    engines, vset = build_engines(4, org_actor)
    leader0 = engines[1]
    prefill_pool(leader0, make_tx(org_actor, 0))
    proposal = leader0.propose()
    digest = ledger.block_hash(proposal.block.header)
    # engines[2] voted (locked) on the round-0 draft; nobody committed
    engines[2].handle_proposal(proposal)

    for e in engines:
        e.take_actions()
    # everyone times out into round 1 (leader: engines[2])
    new_rounds = {}
    for e in engines:
        e.handle_timeout(1, 0)
        for action in e.take_actions():
            if isinstance(action, consensus.Broadcast):
                env = consensus.decode_message(action.payload)
                if env.kind == consensus.MSG_NEW_ROUND:
                    new_rounds[e.me] = env.body
    # deliver the other validators' reports to the round-1 leader
    leader1 = engines[2]
    for sender, msg in new_rounds.items():
        if sender != leader1.me:
            leader1._handle_new_round(msg)
    assert (1, 1) in leader1.proposed
    reproposal = next(
        consensus.decode_message(a.payload).body
        for a in leader1.take_actions()
        if isinstance(a, consensus.Broadcast)
        and consensus.decode_message(a.payload).kind == consensus.MSG_PROPOSAL
    )
    assert ledger.block_hash(reproposal.block.header) == digest  # lock adopted


def test_commit_applies_identity_registration(org_actor, admin_actor):
    engines, vset = build_engines(1, org_actor)
    engine = engines[0]
    admin_id, admin_pub, admin_priv = admin_actor
    engine.registry = engine.registry.with_member(
        identity.StakeholderIdentity.from_public_key(admin_pub, identity.Role.ADMIN)
    )
    new_pub, _ = identity.keygen(b"\x44" * 32)
    newcomer = identity.StakeholderIdentity.from_public_key(new_pub, identity.Role.ORGANIZATIONAL)
    payload = identity.encode_identity(newcomer)
    tx_hash = ehr.compute_tx_hash(ehr.OpKind.REGISTER_IDENTITY, payload, admin_id, 7)
    tx = ehr.build_transaction(
        ehr.OpKind.REGISTER_IDENTITY, payload, admin_id, 7,
        identity.sign_payload(admin_priv, tx_hash),
    )
    engine.submit_transaction(tx)  # N=1: commits immediately
    assert engine.chain.height == 1
    assert engine.registry.get(newcomer.identity_id) == newcomer
