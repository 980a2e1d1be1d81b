"""Crash-fault-tolerant block ordering for a static validator consortium.

One block is decided per height. The leader for (height, round) is fixed
by rotation; it drafts a block from its pending pool, broadcasts it, and
every validator casts at most one vote per round. A quorum of votes
(floor(N/2)+1) over the same header hash seals the block: the votes are
Ed25519 signatures over that hash, so the collected quorum doubles as the
block's commit certificate.

Round changes are where ordering protocols lose safety, so they follow
the standard promise/adopt discipline: entering round r is a promise to
ignore proposals from earlier rounds, each validator reports the round
and draft it last voted for (its lock), and the leader of a later round
must gather a quorum of such reports and re-propose the highest-round
lock among them before it may introduce a fresh draft. Round 0 needs no
reports because no earlier round can have committed anything. Votes,
locks, and the current round survive crashes (they are written to stable
storage by the host); pools and tallies are volatile.

The engine is a deterministic state machine: every input (transaction,
message bytes, timer expiry) produces an ordered list of actions for the
host to execute, and identical input sequences reproduce identical state.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.asymmetric import ed25519

from . import codec, ehr, identity, ledger

logger = logging.getLogger(__name__)

SYNC_BATCH = 32

MSG_TX_GOSSIP = 1
MSG_PROPOSAL = 2
MSG_VOTE = 3
MSG_NEW_ROUND = 4
MSG_COMMIT = 5
MSG_SYNC_REQ = 6
MSG_SYNC_RESP = 7

_KIND_NAMES = {
    MSG_TX_GOSSIP: "tx-gossip",
    MSG_PROPOSAL: "proposal",
    MSG_VOTE: "vote",
    MSG_NEW_ROUND: "new-round",
    MSG_COMMIT: "commit",
    MSG_SYNC_REQ: "sync-req",
    MSG_SYNC_RESP: "sync-resp",
}


class ConsensusError(Exception):
    pass


class NotLeader(ConsensusError):
    pass


@dataclass(frozen=True)
class ValidatorSet:
    """Ordered validator identities, fixed at genesis."""

    validators: tuple[bytes, ...]
    public_keys: dict[bytes, bytes]

    def __post_init__(self) -> None:
        if not self.validators:
            raise ConsensusError("validator set must not be empty")
        for v in self.validators:
            if v not in self.public_keys:
                raise ConsensusError(f"no public key for validator {v.hex()}")

    @property
    def size(self) -> int:
        return len(self.validators)

    @property
    def quorum(self) -> int:
        return self.size // 2 + 1

    def key_of(self, validator_id: bytes) -> bytes | None:
        return self.public_keys.get(validator_id)

    def __contains__(self, validator_id: bytes) -> bool:
        return validator_id in self.public_keys


def leader_for(height: int, round_: int, vset: ValidatorSet) -> bytes:
    return vset.validators[(height + round_) % vset.size]


@dataclass(frozen=True)
class Proposal:
    height: int
    round: int
    block: ledger.Block  # draft: no commit signatures yet
    proposer_id: bytes
    signature: bytes


@dataclass(frozen=True)
class VoteMessage:
    height: int
    round: int
    block_hash: bytes
    voter_id: bytes
    signature: bytes


@dataclass(frozen=True)
class NewRound:
    """Round-entry promise carrying the sender's lock, if any."""

    height: int
    round: int
    lock_round: int  # -1 when the sender has not voted at this height
    lock_block: ledger.Block | None
    validator_id: bytes
    signature: bytes


# --- host actions -----------------------------------------------------------


@dataclass(frozen=True)
class Send:
    to: bytes
    payload: bytes


@dataclass(frozen=True)
class Broadcast:
    payload: bytes


@dataclass(frozen=True)
class SetTimer:
    height: int
    round: int
    duration_ticks: int


@dataclass(frozen=True)
class Committed:
    block: ledger.Block


@dataclass(frozen=True)
class Note:
    kind: str
    detail: str


Action = Send | Broadcast | SetTimer | Committed | Note


# --- wire encoding ----------------------------------------------------------


def _new_round_digest(
    height: int, round_: int, lock_round: int, lock_hash: bytes, sender: bytes
) -> bytes:
    return hashlib.sha256(
        b"NEWROUND"
        + codec.u64(height)
        + codec.u64(round_)
        + codec.u64(lock_round + 1)
        + lock_hash
        + sender
    ).digest()


def encode_proposal(p: Proposal) -> bytes:
    return (
        codec.u8(MSG_PROPOSAL)
        + p.proposer_id
        + codec.u64(p.height)
        + codec.u64(p.round)
        + codec.var_bytes(ledger.encode_block(p.block))
        + p.signature
    )


def encode_vote(v: VoteMessage) -> bytes:
    return (
        codec.u8(MSG_VOTE)
        + v.voter_id
        + codec.u64(v.height)
        + codec.u64(v.round)
        + v.block_hash
        + v.signature
    )


def encode_new_round(n: NewRound) -> bytes:
    lock = b"" if n.lock_block is None else ledger.encode_block(n.lock_block)
    return (
        codec.u8(MSG_NEW_ROUND)
        + n.validator_id
        + codec.u64(n.height)
        + codec.u64(n.round)
        + codec.u64(n.lock_round + 1)
        + codec.var_bytes(lock)
        + n.signature
    )


def encode_tx_gossip(sender: bytes, tx: ehr.Transaction) -> bytes:
    return codec.u8(MSG_TX_GOSSIP) + sender + ehr.encode_transaction(tx)


def encode_commit(sender: bytes, block: ledger.Block) -> bytes:
    return codec.u8(MSG_COMMIT) + sender + ledger.encode_block(block)


def encode_sync_req(sender: bytes, from_height: int) -> bytes:
    return codec.u8(MSG_SYNC_REQ) + sender + codec.u64(from_height)


def encode_sync_resp(sender: bytes, blocks: list[ledger.Block]) -> bytes:
    parts = [codec.u8(MSG_SYNC_RESP), sender, codec.u32(len(blocks))]
    for block in blocks:
        parts.append(codec.var_bytes(ledger.encode_block(block)))
    return b"".join(parts)


@dataclass(frozen=True)
class Envelope:
    kind: int
    sender: bytes
    body: object

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES.get(self.kind, f"kind-{self.kind}")


def decode_message(payload: bytes) -> Envelope:
    r = codec.Reader(payload)
    kind = r.u8()
    sender = r.take(16)
    if kind == MSG_TX_GOSSIP:
        body: object = ehr.read_transaction(r)
    elif kind == MSG_PROPOSAL:
        height = r.u64()
        round_ = r.u64()
        block = ledger.decode_block(r.var_bytes())
        signature = r.take(64)
        body = Proposal(height, round_, block, sender, signature)
    elif kind == MSG_VOTE:
        height = r.u64()
        round_ = r.u64()
        block_hash = r.take(32)
        signature = r.take(64)
        body = VoteMessage(height, round_, block_hash, sender, signature)
    elif kind == MSG_NEW_ROUND:
        height = r.u64()
        round_ = r.u64()
        lock_round = r.u64() - 1
        raw = r.var_bytes()
        lock_block = ledger.decode_block(raw) if raw else None
        signature = r.take(64)
        body = NewRound(height, round_, lock_round, lock_block, sender, signature)
    elif kind == MSG_COMMIT:
        body = ledger.read_block(r)
    elif kind == MSG_SYNC_REQ:
        body = r.u64()
    elif kind == MSG_SYNC_RESP:
        body = [ledger.decode_block(r.var_bytes()) for _ in range(r.u32())]
    else:
        raise codec.MalformedFrame(f"unknown message kind {kind}")
    r.finish()
    return Envelope(kind=kind, sender=sender, body=body)


# --- engine ----------------------------------------------------------------


@dataclass(frozen=True)
class EngineConfig:
    max_block_txs: int = 100
    base_timeout_ticks: int = 8
    timeout_cap_ticks: int = 256


@dataclass
class _Lock:
    round: int
    block: ledger.Block


@dataclass
class _PoolEntry:
    arrival: int
    tx: ehr.Transaction

    @property
    def order_key(self) -> tuple[int, bytes]:
        return (self.arrival, self.tx.tx_hash)


@dataclass
class Rejection:
    reason: str

    def __str__(self) -> str:
        return self.reason


class Engine:
    """One validator's consensus state machine.

    Thread-unsafe by design: the host serializes all inputs. Calls append
    actions to an internal queue; the host drains it with take_actions().
    """

    def __init__(
        self,
        me: bytes,
        signing_key: ed25519.Ed25519PrivateKey,
        vset: ValidatorSet,
        registry: identity.Registry,
        chain: ledger.ChainState,
        config: EngineConfig | None = None,
        clock=None,
    ):
        self.me = me
        self.signing_key = signing_key
        self.vset = vset
        self.registry = registry
        self.chain = chain
        self.config = config or EngineConfig()
        self.clock = clock or (lambda: 0)

        # Durable consensus state: must survive a crash.
        self.round = 0
        self.voted: dict[tuple[int, int], bytes] = {}
        self.lock: _Lock | None = None

        # Volatile state: rebuilt from the network after a crash.
        self.pool: dict[bytes, _PoolEntry] = {}
        self.tallies: dict[tuple[int, int, bytes], dict[bytes, bytes]] = {}
        self.vote_seen: dict[tuple[int, int, bytes], bytes] = {}
        self.round_reports: dict[tuple[int, int], dict[bytes, tuple[int, ledger.Block | None]]] = {}
        self.drafts: dict[bytes, ledger.Block] = {}
        self.proposed: set[tuple[int, int]] = set()
        self.new_round_sent: set[tuple[int, int]] = set()

        self.committed_txs: set[bytes] = set()
        for block in chain.blocks:
            for tx in block.transactions:
                self.committed_txs.add(tx.tx_hash)
        self.anomalies: list[ehr.Anomaly] = []

        self._actions: list[Action] = []
        # Ed25519 is deterministic, so signatures over repeated digests are
        # memoized; clones share the cache (same key, pure function).
        self._sign_cache: dict[bytes, bytes] = {}

    # -- host interface -------------------------------------------------

    @property
    def next_height(self) -> int:
        return self.chain.height + 1

    def take_actions(self) -> list[Action]:
        actions, self._actions = self._actions, []
        return actions

    def start(self) -> None:
        self._set_timer()

    def recover(self) -> None:
        """Rebuild after a crash. Durable state survives: the chain, the
        current round, votes and lock (safety requires them), and the
        pending pool (an accepted submission must not evaporate with a
        reboot). Tallies, reports, and drafts refill from peers."""
        self.tallies.clear()
        self.vote_seen.clear()
        self.round_reports.clear()
        self.drafts.clear()
        self.proposed.clear()
        self.new_round_sent.clear()
        if self.lock is not None:
            self._register_draft(self.lock.block)
        for entry in sorted(self.pool.values(), key=lambda e: e.order_key):
            self._emit(Broadcast(encode_tx_gossip(self.me, entry.tx)))
        self._emit(Broadcast(encode_sync_req(self.me, self.next_height)))
        self._set_timer()

    def submit_transaction(self, tx: ehr.Transaction) -> None:
        if self._admit_tx(tx, gossip=True):
            self._maybe_propose()

    def receive(self, payload: bytes) -> None:
        try:
            env = decode_message(payload)
        except codec.CodecError as exc:
            self._note("reject", f"undecodable message: {exc}")
            return
        if env.sender not in self.vset and env.kind != MSG_TX_GOSSIP:
            self._note("reject", f"{env.kind_name} from non-validator")
            return
        if env.kind == MSG_TX_GOSSIP:
            if self._admit_tx(env.body, gossip=False):
                self._maybe_propose()
        elif env.kind == MSG_PROPOSAL:
            self.handle_proposal(env.body)
        elif env.kind == MSG_VOTE:
            self.handle_vote(env.body)
        elif env.kind == MSG_NEW_ROUND:
            self._handle_new_round(env.body)
        elif env.kind == MSG_COMMIT:
            self._handle_commit(env.sender, env.body)
        elif env.kind == MSG_SYNC_REQ:
            self._handle_sync_req(env.sender, env.body)
        elif env.kind == MSG_SYNC_RESP:
            for block in env.body:
                self._try_adopt_sealed(block)

    # -- protocol operations ---------------------------------------------

    def propose(self) -> Proposal | None:
        """Draft and broadcast a proposal for the current (height, round).

        Raises NotLeader when called out of turn; returns None when there
        is nothing to propose (empty pool and no adopted lock, or a round
        that has not yet gathered its quorum of round-entry reports).
        """
        height, round_ = self.next_height, self.round
        if leader_for(height, round_, self.vset) != self.me:
            raise NotLeader(f"not leader for height {height} round {round_}")
        if (height, round_) in self.proposed:
            return None
        draft = self._choose_draft(height, round_)
        if draft is None:
            return None
        digest = ledger.block_hash(draft.header)
        proposal = Proposal(
            height=height,
            round=round_,
            block=draft,
            proposer_id=self.me,
            signature=self._sign(digest),
        )
        self.proposed.add((height, round_))
        self._register_draft(draft)
        self._note("propose", f"h={height} r={round_} hash={digest.hex()[:16]}")
        self._emit(Broadcast(encode_proposal(proposal)))
        self.handle_proposal(proposal)  # leader votes for its own draft
        return proposal

    def handle_proposal(self, proposal: Proposal) -> VoteMessage | Rejection:
        """Vote for a valid proposal, or explain exactly why not."""
        height, round_ = proposal.height, proposal.round
        if height != self.next_height:
            if height > self.next_height:
                self._emit(Send(proposal.proposer_id, encode_sync_req(self.me, self.next_height)))
                return self._reject("future-height")
            return self._reject("stale-height")
        if round_ < self.round:
            return self._reject("stale-round")
        expected = leader_for(height, round_, self.vset)
        if proposal.proposer_id != expected:
            return self._reject("wrong-leader")
        digest = ledger.block_hash(proposal.block.header)
        proposer_key = self.vset.key_of(proposal.proposer_id)
        if not identity.verify_payload(proposer_key, digest, proposal.signature):
            return self._reject("bad-proposal-signature")
        if round_ > self.round:
            self._advance_round(round_, reason="proposal")
        prior = self.voted.get((height, round_))
        if prior is not None:
            if prior != digest:
                return self._reject("already-voted")
            vote = self._vote_for(height, round_, digest)  # idempotent re-send
            self._emit(Broadcast(encode_vote(vote)))
            return vote
        problem = self._draft_problem(proposal.block)
        if problem is not None:
            return self._reject(f"invalid-block:{problem}")
        self._register_draft(proposal.block)
        self.voted[(height, round_)] = digest
        self.lock = _Lock(round=round_, block=proposal.block)
        vote = self._vote_for(height, round_, digest)
        self._note("vote", f"h={height} r={round_} hash={digest.hex()[:16]}")
        self._emit(Broadcast(encode_vote(vote)))
        self.handle_vote(vote)
        return vote

    def handle_vote(self, vote: VoteMessage) -> ledger.Block | None:
        """Tally a vote; returns the sealed block when it completes a quorum."""
        height, round_, digest = vote.height, vote.round, vote.block_hash
        if height != self.next_height:
            if height > self.next_height:
                self._emit(Send(vote.voter_id, encode_sync_req(self.me, self.next_height)))
            return None
        if vote.voter_id not in self.vset:
            self._reject("vote-from-non-validator")
            return None
        seen = self.vote_seen.get((height, round_, vote.voter_id))
        if seen is not None:
            if seen != digest:
                self._reject("conflicting-vote")
            return None
        key = self.vset.key_of(vote.voter_id)
        if not identity.verify_payload(key, digest, vote.signature):
            self._reject("bad-vote-signature")
            return None
        self.vote_seen[(height, round_, vote.voter_id)] = digest
        tally = self.tallies.setdefault((height, round_, digest), {})
        tally[vote.voter_id] = vote.signature
        return self._try_seal(height, round_, digest)

    def handle_timeout(self, height: int, round_: int) -> None:
        """Advance to the next round when the current one stalls. Stale
        timers (older height or round, or already committed) are ignored."""
        if height != self.next_height or round_ != self.round:
            return
        self._note("timeout", f"h={height} r={round_}")
        for entry in sorted(self.pool.values(), key=lambda e: e.order_key):
            self._emit(Broadcast(encode_tx_gossip(self.me, entry.tx)))
        self._emit(Broadcast(encode_sync_req(self.me, self.next_height)))
        self._advance_round(round_ + 1, reason="timeout")

    # -- internals --------------------------------------------------------

    def _sign(self, data: bytes) -> bytes:
        sig = self._sign_cache.get(data)
        if sig is None:
            sig = identity.sign_payload(self.signing_key, data)
            self._sign_cache[data] = sig
        return sig

    def _emit(self, action: Action) -> None:
        self._actions.append(action)

    def _note(self, kind: str, detail: str) -> None:
        logger.debug("%s %s: %s", self.me.hex()[:8], kind, detail)
        self._emit(Note(kind, detail))

    def _reject(self, reason: str) -> Rejection:
        self._note("reject", reason)
        return Rejection(reason)

    def _timeout_for(self, round_: int) -> int:
        base = self.config.base_timeout_ticks
        shift = min(round_, 16)
        return min(base << shift, self.config.timeout_cap_ticks)

    def _set_timer(self) -> None:
        self._emit(SetTimer(self.next_height, self.round, self._timeout_for(self.round)))

    def _admit_tx(self, tx: ehr.Transaction, gossip: bool) -> bool:
        if tx.tx_hash in self.pool or tx.tx_hash in self.committed_txs:
            return False
        actor = self.registry.get(tx.actor_id)
        if actor is None:
            self._note("reject", f"tx from unknown actor {tx.actor_id.hex()}")
            return False
        if not ehr.verify_transaction(tx, actor.public_key):
            self._note("reject", f"bad tx signature {tx.tx_hash.hex()[:16]}")
            return False
        self.pool[tx.tx_hash] = _PoolEntry(arrival=self.clock(), tx=tx)
        if gossip:
            self._emit(Broadcast(encode_tx_gossip(self.me, tx)))
        return True

    def _pool_order(self) -> list[ehr.Transaction]:
        entries = sorted(self.pool.values(), key=lambda e: e.order_key)
        return [e.tx for e in entries]

    def _choose_draft(self, height: int, round_: int) -> ledger.Block | None:
        if round_ > 0:
            reports = self.round_reports.get((height, round_), {})
            if len(reports) < self.vset.quorum:
                return None  # cannot safely propose without a report quorum
            best: tuple[int, ledger.Block] | None = None
            for lock_round, block in reports.values():
                if block is not None and (best is None or lock_round > best[0]):
                    best = (lock_round, block)
            if best is not None:
                return best[1]
        txs = [
            tx
            for tx in self._pool_order()
            if tx.tx_hash not in self.committed_txs
        ][: self.config.max_block_txs]
        if not txs:
            return None
        timestamp = max(self.chain.tip.header.timestamp_ms, self.clock())
        try:
            return ledger.assemble_block(
                self.chain.tip,
                txs,
                timestamp,
                self.me,
                key_of=self._actor_key,
            )
        except ledger.LedgerError as exc:
            self._note("reject", f"draft failed: {exc}")
            return None

    def _actor_key(self, actor_id: bytes) -> bytes | None:
        actor = self.registry.get(actor_id)
        return None if actor is None else actor.public_key

    def _draft_problem(self, draft: ledger.Block) -> str | None:
        violations = ledger.validate_block(self.chain.tip, draft, quorum=0)
        if violations:
            return violations[0].rule
        seen: set[bytes] = set()
        for tx in draft.transactions:
            if tx.tx_hash in seen:
                return "duplicate-tx"
            seen.add(tx.tx_hash)
            if tx.tx_hash in self.committed_txs:
                return "replayed-tx"
            key = self._actor_key(tx.actor_id)
            if key is None:
                return "unknown-actor"
            if not ehr.verify_transaction(tx, key):
                return "bad-tx-signature"
        return None

    def _register_draft(self, draft: ledger.Block) -> None:
        self.drafts[ledger.block_hash(draft.header)] = draft

    def _vote_for(self, height: int, round_: int, digest: bytes) -> VoteMessage:
        return VoteMessage(
            height=height,
            round=round_,
            block_hash=digest,
            voter_id=self.me,
            signature=self._sign(digest),
        )

    def _try_seal(self, height: int, round_: int, digest: bytes) -> ledger.Block | None:
        tally = self.tallies.get((height, round_, digest), {})
        if len(tally) < self.vset.quorum:
            return None
        draft = self.drafts.get(digest)
        if draft is None:
            return None  # quorum reached but draft unseen; commit arrives via sync
        sealed = ledger.Block(
            header=draft.header,
            transactions=draft.transactions,
            commit_signatures=tuple(sorted(tally.items())),
        )
        self._commit(sealed, announce=True)
        return sealed

    def _handle_new_round(self, msg: NewRound) -> None:
        if msg.height != self.next_height:
            if msg.height > self.next_height:
                self._emit(Send(msg.validator_id, encode_sync_req(self.me, self.next_height)))
            return
        lock_hash = (
            bytes(32)
            if msg.lock_block is None
            else ledger.block_hash(msg.lock_block.header)
        )
        digest = _new_round_digest(
            msg.height, msg.round, msg.lock_round, lock_hash, msg.validator_id
        )
        if not identity.verify_payload(
            self.vset.key_of(msg.validator_id), digest, msg.signature
        ):
            self._reject("bad-new-round-signature")
            return
        reports = self.round_reports.setdefault((msg.height, msg.round), {})
        reports.setdefault(msg.validator_id, (msg.lock_round, msg.lock_block))
        if msg.lock_block is not None:
            self._register_draft(msg.lock_block)
        if msg.round > self.round:
            self._advance_round(msg.round, reason="peer-new-round")
        else:
            self._maybe_propose()

    def _advance_round(self, round_: int, reason: str) -> None:
        """Enter ``round_``: a promise to ignore any earlier-round proposal."""
        self.round = round_
        height = self.next_height
        self._note("round", f"h={height} r={round_} via {reason}")
        if round_ > 0 and (height, round_) not in self.new_round_sent:
            self.new_round_sent.add((height, round_))
            lock_round = -1 if self.lock is None else self.lock.round
            lock_block = None if self.lock is None else self.lock.block
            lock_hash = bytes(32) if lock_block is None else ledger.block_hash(lock_block.header)
            digest = _new_round_digest(height, round_, lock_round, lock_hash, self.me)
            msg = NewRound(
                height=height,
                round=round_,
                lock_round=lock_round,
                lock_block=lock_block,
                validator_id=self.me,
                signature=self._sign(digest),
            )
            reports = self.round_reports.setdefault((height, round_), {})
            reports.setdefault(self.me, (lock_round, lock_block))
            self._emit(Broadcast(encode_new_round(msg)))
        self._set_timer()
        self._maybe_propose()

    def _maybe_propose(self) -> None:
        height, round_ = self.next_height, self.round
        if leader_for(height, round_, self.vset) != self.me:
            return
        if (height, round_) in self.proposed:
            return
        try:
            self.propose()
        except NotLeader:  # pragma: no cover - guarded above
            pass

    def _handle_commit(self, sender: bytes, block: ledger.Block) -> None:
        if block.height > self.next_height:
            self._emit(Send(sender, encode_sync_req(self.me, self.next_height)))
            return
        self._try_adopt_sealed(block)

    def _try_adopt_sealed(self, block: ledger.Block) -> None:
        if block.height != self.next_height:
            return
        violations = ledger.validate_block(
            self.chain.tip,
            block,
            quorum=self.vset.quorum,
            validator_keys=self.vset.public_keys,
        )
        if violations:
            self._reject(f"bad-sealed-block:{violations[0].rule}")
            return
        self._commit(block, announce=False)

    def _handle_sync_req(self, sender: bytes, from_height: int) -> None:
        if sender == self.me or from_height > self.chain.height:
            return
        start = max(0, from_height)
        blocks = list(self.chain.blocks[start : start + SYNC_BATCH])
        if blocks:
            self._emit(Send(sender, encode_sync_resp(self.me, blocks)))

    def _commit(self, block: ledger.Block, announce: bool) -> None:
        self.chain = ledger.ChainState(blocks=self.chain.blocks + (block,))
        for tx in block.transactions:
            self.committed_txs.add(tx.tx_hash)
            self.pool.pop(tx.tx_hash, None)
        self.registry = ehr.apply_registry_block(self.registry, block, self.anomalies)
        height = block.height
        self.round = 0
        self.lock = None
        self.voted = {k: v for k, v in self.voted.items() if k[0] > height}
        self.tallies = {k: v for k, v in self.tallies.items() if k[0] > height}
        self.vote_seen = {k: v for k, v in self.vote_seen.items() if k[0] > height}
        self.round_reports = {
            k: v for k, v in self.round_reports.items() if k[0] > height
        }
        self.proposed = {k for k in self.proposed if k[0] > height}
        self.new_round_sent = {k for k in self.new_round_sent if k[0] > height}
        self.drafts.clear()
        digest = ledger.block_hash(block.header)
        self._note("commit", f"h={height} hash={digest.hex()[:16]} txs={len(block.transactions)}")
        self._emit(Committed(block))
        if announce:
            self._emit(Broadcast(encode_commit(self.me, block)))
        self._set_timer()
        self._maybe_propose()

    def clone(self) -> "Engine":
        """Independent copy for state-space exploration. Key material,
        validator set, and immutable chain tuples are shared; every mutable
        container is copied."""
        other = Engine.__new__(Engine)
        other.me = self.me
        other.signing_key = self.signing_key
        other.vset = self.vset
        other.registry = self.registry
        other.chain = self.chain
        other.config = self.config
        other.clock = self.clock
        other.round = self.round
        other.voted = dict(self.voted)
        other.lock = self.lock
        other.pool = dict(self.pool)
        other.tallies = {k: dict(v) for k, v in self.tallies.items()}
        other.vote_seen = dict(self.vote_seen)
        other.round_reports = {k: dict(v) for k, v in self.round_reports.items()}
        other.drafts = dict(self.drafts)
        other.proposed = set(self.proposed)
        other.new_round_sent = set(self.new_round_sent)
        other.committed_txs = set(self.committed_txs)
        other.anomalies = list(self.anomalies)
        other._actions = list(self._actions)
        other._sign_cache = self._sign_cache
        return other

    # -- introspection for the simulator's model checker ------------------

    def model_key(self) -> tuple:
        """Canonical digest of all behavior-relevant state (for state-space
        deduplication in exhaustive schedule exploration)."""
        return (
            tuple(ledger.block_hash(b.header) for b in self.chain.blocks),
            self.round,
            tuple(sorted(self.voted.items())),
            None
            if self.lock is None
            else (self.lock.round, ledger.block_hash(self.lock.block.header)),
            tuple(sorted(self.pool)),
            tuple(
                (k, tuple(sorted(v)))
                for k, v in sorted(self.tallies.items())
            ),
            tuple(
                (k, tuple(sorted((s, lr) for s, (lr, _) in v.items())))
                for k, v in sorted(self.round_reports.items())
            ),
            tuple(sorted(self.proposed)),
            tuple(sorted(self.drafts)),
        )
