"""Deterministic discrete-event harness for consensus engines.

Time is a logical tick counter. Every in-flight message is dropped,
delayed, or duplicated by a seeded splitmix64 generator, so a scenario's
full trace is a pure function of its description: identical scenarios
replay byte-identically, on any platform. Crashed validators receive
nothing and send nothing; recovery restores only what the engine keeps
on stable storage. Partitions block messages whose sender and recipient
sit in different groups at send time.

Per-tick processing order (part of the determinism contract):
crashes, recoveries, workload injections, message deliveries in schedule
order, then timer expiries in validator order. Actions produced by a
step are processed immediately; new deliveries land at tick+1+delay.
"""
from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass

from . import consensus, ehr, identity, ledger

MASK64 = (1 << 64) - 1


class InvalidScenario(ValueError):
    pass


class SplitMix64:
    """splitmix64: 64-bit linear state with the standard finalizer, chosen
    so traces replay identically under any faithful reimplementation."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (2.0**-53)

    def randrange(self, lo: int, hi: int) -> int:
        """Uniform-ish integer in [lo, hi] (modulo draw; bias is irrelevant
        at these span sizes and keeps the draw sequence trivially portable)."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.next_u64() % (hi - lo + 1)

    def bytes32(self) -> bytes:
        return b"".join(self.next_u64().to_bytes(8, "big") for _ in range(4))


@dataclass(frozen=True)
class PartitionWindow:
    start_tick: int
    end_tick: int
    groups: tuple[tuple[int, ...], ...]

    def separates(self, a: int, b: int, tick: int) -> bool:
        if not self.start_tick <= tick < self.end_tick:
            return False
        for group in self.groups:
            if a in group:
                return b not in group
        return True  # unlisted validators form an implicit own group


@dataclass(frozen=True)
class CrashEvent:
    validator: int
    crash_tick: int
    recover_tick: int | None = None


@dataclass(frozen=True)
class WorkloadEntry:
    tick: int
    record: ehr.PatientRecord
    target: int | None = None


@dataclass(frozen=True)
class Scenario:
    n_validators: int
    seed: int
    drop_rate: float = 0.0
    delay_distribution: tuple[int, int] = (0, 0)
    duplicate_rate: float = 0.0
    partitions: tuple[PartitionWindow, ...] = ()
    crash_schedule: tuple[CrashEvent, ...] = ()
    workload: tuple[WorkloadEntry, ...] = ()
    max_ticks: int = 300
    max_block_txs: int = 100
    base_timeout_ticks: int = 6
    timeout_cap_ticks: int = 24

    def validate(self) -> None:
        if self.n_validators < 1:
            raise InvalidScenario("n_validators must be >= 1")
        if not 0.0 <= self.drop_rate < 1.0:
            raise InvalidScenario("drop_rate must be in [0, 1)")
        if not 0.0 <= self.duplicate_rate < 1.0:
            raise InvalidScenario("duplicate_rate must be in [0, 1)")
        lo, hi = self.delay_distribution
        if lo < 0 or hi < lo:
            raise InvalidScenario("delay_distribution must be 0 <= min <= max")
        if self.max_ticks < 1:
            raise InvalidScenario("max_ticks must be >= 1")
        for w in self.partitions:
            if w.start_tick < 0 or w.end_tick < w.start_tick:
                raise InvalidScenario("partition window must be well-ordered")
            members = [v for g in w.groups for v in g]
            if len(set(members)) != len(members):
                raise InvalidScenario("partition groups must be disjoint")
            if any(not 0 <= v < self.n_validators for v in members):
                raise InvalidScenario("partition group member out of range")
        for c in self.crash_schedule:
            if not 0 <= c.validator < self.n_validators:
                raise InvalidScenario("crash validator out of range")
            if c.crash_tick < 0:
                raise InvalidScenario("crash_tick must be >= 0")
            if c.recover_tick is not None and c.recover_tick <= c.crash_tick:
                raise InvalidScenario("recover_tick must follow crash_tick")
        for entry in self.workload:
            if entry.tick < 0:
                raise InvalidScenario("workload tick must be >= 0")
            if entry.target is not None and not 0 <= entry.target < self.n_validators:
                raise InvalidScenario("workload target out of range")

    def to_json(self) -> str:
        doc = {
            "n_validators": self.n_validators,
            "seed": self.seed,
            "drop_rate": self.drop_rate,
            "delay_distribution": list(self.delay_distribution),
            "duplicate_rate": self.duplicate_rate,
            "partitions": [
                {
                    "start_tick": w.start_tick,
                    "end_tick": w.end_tick,
                    "groups": [list(g) for g in w.groups],
                }
                for w in self.partitions
            ],
            "crash_schedule": [
                {
                    "validator": c.validator,
                    "crash_tick": c.crash_tick,
                    "recover_tick": c.recover_tick,
                }
                for c in self.crash_schedule
            ],
            "workload": [
                {
                    "tick": e.tick,
                    "record": e.record.as_dict(),
                    **({"target": e.target} if e.target is not None else {}),
                }
                for e in self.workload
            ],
            "max_ticks": self.max_ticks,
            "max_block_txs": self.max_block_txs,
            "base_timeout_ticks": self.base_timeout_ticks,
            "timeout_cap_ticks": self.timeout_cap_ticks,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidScenario(f"not valid JSON: {exc}") from exc
        try:
            scenario = cls(
                n_validators=int(doc["n_validators"]),
                seed=int(doc["seed"]),
                drop_rate=float(doc.get("drop_rate", 0.0)),
                delay_distribution=tuple(doc.get("delay_distribution", (0, 0))),
                duplicate_rate=float(doc.get("duplicate_rate", 0.0)),
                partitions=tuple(
                    PartitionWindow(
                        start_tick=int(w["start_tick"]),
                        end_tick=int(w["end_tick"]),
                        groups=tuple(tuple(int(v) for v in g) for g in w["groups"]),
                    )
                    for w in doc.get("partitions", ())
                ),
                crash_schedule=tuple(
                    CrashEvent(
                        validator=int(c["validator"]),
                        crash_tick=int(c["crash_tick"]),
                        recover_tick=(
                            None
                            if c.get("recover_tick") is None
                            else int(c["recover_tick"])
                        ),
                    )
                    for c in doc.get("crash_schedule", ())
                ),
                workload=tuple(
                    WorkloadEntry(
                        tick=int(e["tick"]),
                        record=ehr.PatientRecord.from_dict(e.get("record", {})),
                        target=None if e.get("target") is None else int(e["target"]),
                    )
                    for e in doc.get("workload", ())
                ),
                max_ticks=int(doc.get("max_ticks", 300)),
                max_block_txs=int(doc.get("max_block_txs", 100)),
                base_timeout_ticks=int(doc.get("base_timeout_ticks", 6)),
                timeout_cap_ticks=int(doc.get("timeout_cap_ticks", 24)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"bad scenario document: {exc}") from exc
        scenario.validate()
        return scenario


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    validator: int
    kind: str
    detail: str


@dataclass
class Trace:
    n_validators: int
    events: list[TraceEvent]
    final_chains: list[ledger.ChainState]
    crashed_at_end: set[int]
    workload_tx_hashes: list[bytes]
    commit_ticks: list[dict[bytes, int]]  # per validator: tx_hash -> commit tick
    scenario: Scenario
    end_tick: int


def render_trace(trace: Trace) -> str:
    lines = [
        f"tick={e.tick:06d} v={e.validator} kind={e.kind} {e.detail}"
        for e in trace.events
    ]
    lines.append(f"end_tick={trace.end_tick}")
    for i, chain in enumerate(trace.final_chains):
        tip = ledger.block_hash(chain.tip.header).hex()
        lines.append(f"final v={i} height={chain.height} tip={tip}")
    return "\n".join(lines) + "\n"


def _digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


class _Sim:
    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.sc = scenario
        self.n = scenario.n_validators
        self.tick = 0
        self.seq = 0
        self.rng = SplitMix64(scenario.seed)
        self.events: list[TraceEvent] = []
        self.queue: list[tuple[int, int, int, bytes]] = []  # (tick, seq, to, payload)
        self.crashed: set[int] = set()
        self.timers: dict[int, tuple[int, int, int]] = {}  # v -> (expire, h, r)
        self.commit_ticks: list[dict[bytes, int]] = [dict() for _ in range(self.n)]

        genesis = ledger.make_genesis(f"netsim-{scenario.seed}", 0)
        validator_ids: list[bytes] = []
        keys: dict[bytes, bytes] = {}
        signers = []
        for _ in range(self.n):
            public, private = identity.keygen(self.rng.bytes32())
            vid = identity.identity_id_for(public)
            validator_ids.append(vid)
            keys[vid] = public
            signers.append(private)
        vset = consensus.ValidatorSet(tuple(validator_ids), keys)
        org_public, org_private = identity.keygen(self.rng.bytes32())
        registry = identity.Registry.bootstrap(
            [
                identity.StakeholderIdentity.from_public_key(
                    org_public, identity.Role.ORGANIZATIONAL
                )
            ]
        )
        self.org_id = identity.identity_id_for(org_public)
        self.id_to_index = {vid: i for i, vid in enumerate(validator_ids)}
        config = consensus.EngineConfig(
            max_block_txs=scenario.max_block_txs,
            base_timeout_ticks=scenario.base_timeout_ticks,
            timeout_cap_ticks=scenario.timeout_cap_ticks,
        )
        self.engines = [
            consensus.Engine(
                me=validator_ids[i],
                signing_key=signers[i],
                vset=vset,
                registry=registry,
                chain=ledger.ChainState.from_genesis(genesis),
                config=config,
                clock=lambda: self.tick,
            )
            for i in range(self.n)
        ]
        self.workload_txs: list[tuple[int, int, int | None, ehr.Transaction]] = []
        for idx, entry in enumerate(scenario.workload):
            tx = ehr.make_transaction(
                ehr.OpKind.CREATE_RECORD,
                entry.record,
                self.org_id,
                entry.tick * 1000 + idx,
                org_private,
            )
            self.workload_txs.append((entry.tick, idx, entry.target, tx))
        self.last_scheduled = max(
            [e.tick for e in scenario.workload]
            + [c.crash_tick for c in scenario.crash_schedule]
            + [c.recover_tick for c in scenario.crash_schedule if c.recover_tick]
            + [w.end_tick for w in scenario.partitions]
            + [0]
        )

    def log(self, validator: int, kind: str, detail: str) -> None:
        self.events.append(TraceEvent(self.tick, validator, kind, detail))

    def separated(self, a: int, b: int) -> bool:
        return any(w.separates(a, b, self.tick) for w in self.sc.partitions)

    def schedule(self, sender: int, recipient: int, payload: bytes) -> None:
        if self.separated(sender, recipient):
            self.log(sender, "blocked", f"to={recipient} digest={_digest(payload)}")
            return
        if self.sc.drop_rate > 0.0 and self.rng.uniform() < self.sc.drop_rate:
            self.log(sender, "drop", f"to={recipient} digest={_digest(payload)}")
            return
        lo, hi = self.sc.delay_distribution
        deliver = self.tick + 1 + self.rng.randrange(lo, hi)
        self.seq += 1
        heapq.heappush(self.queue, (deliver, self.seq, recipient, payload))
        if self.sc.duplicate_rate > 0.0 and self.rng.uniform() < self.sc.duplicate_rate:
            extra = self.tick + 1 + self.rng.randrange(lo, hi)
            self.seq += 1
            heapq.heappush(self.queue, (extra, self.seq, recipient, payload))
            self.log(sender, "dup", f"to={recipient} digest={_digest(payload)}")

    def process_actions(self, i: int) -> None:
        for action in self.engines[i].take_actions():
            if isinstance(action, consensus.Broadcast):
                for j in range(self.n):
                    if j != i:
                        self.schedule(i, j, action.payload)
            elif isinstance(action, consensus.Send):
                target = self.id_to_index.get(action.to)
                if target is not None and target != i:
                    self.schedule(i, target, action.payload)
            elif isinstance(action, consensus.SetTimer):
                self.timers[i] = (
                    self.tick + action.duration_ticks,
                    action.height,
                    action.round,
                )
            elif isinstance(action, consensus.Committed):
                block = action.block
                digest = ledger.block_hash(block.header).hex()[:16]
                self.log(i, "commit", f"h={block.height} hash={digest}")
                for tx in block.transactions:
                    self.commit_ticks[i].setdefault(tx.tx_hash, self.tick)
            elif isinstance(action, consensus.Note):
                if action.kind != "commit":
                    self.log(i, action.kind, action.detail)

    def all_workload_settled(self) -> bool:
        wanted = {tx.tx_hash for *_, tx in self.workload_txs}
        if not wanted:
            return True
        for i in range(self.n):
            if i in self.crashed:
                continue
            if not wanted <= self.engines[i].committed_txs:
                return False
        return True

    def run(self) -> Trace:
        for i in range(self.n):
            self.engines[i].start()
            self.process_actions(i)
        end_tick = self.sc.max_ticks
        for tick in range(self.sc.max_ticks + 1):
            self.tick = tick
            for c in self.sc.crash_schedule:
                if c.crash_tick == tick and c.validator not in self.crashed:
                    self.crashed.add(c.validator)
                    self.timers.pop(c.validator, None)
                    self.log(c.validator, "crash", "")
                if c.recover_tick == tick and c.validator in self.crashed:
                    self.crashed.discard(c.validator)
                    self.log(c.validator, "recover", "")
                    self.engines[c.validator].recover()
                    self.process_actions(c.validator)
            for entry_tick, idx, target, tx in self.workload_txs:
                if entry_tick != tick:
                    continue
                chosen = self._live_target(target if target is not None else idx % self.n)
                if chosen is None:
                    self.log(0, "inject-lost", f"tx={tx.tx_hash.hex()[:16]}")
                    continue
                self.log(chosen, "inject", f"tx={tx.tx_hash.hex()[:16]}")
                self.engines[chosen].submit_transaction(tx)
                self.process_actions(chosen)
            while self.queue and self.queue[0][0] <= tick:
                _, _, recipient, payload = heapq.heappop(self.queue)
                if recipient in self.crashed:
                    self.log(recipient, "crashlost", f"digest={_digest(payload)}")
                    continue
                self.log(recipient, "deliver", f"digest={_digest(payload)}")
                self.engines[recipient].receive(payload)
                self.process_actions(recipient)
            for i in range(self.n):
                timer = self.timers.get(i)
                if timer is None or i in self.crashed:
                    continue
                expire, height, round_ = timer
                if expire <= tick:
                    del self.timers[i]
                    self.engines[i].handle_timeout(height, round_)
                    self.process_actions(i)
            if tick >= self.last_scheduled and self.all_workload_settled():
                end_tick = tick
                break
        return Trace(
            n_validators=self.n,
            events=self.events,
            final_chains=[e.chain for e in self.engines],
            crashed_at_end=set(self.crashed),
            workload_tx_hashes=[tx.tx_hash for *_, tx in self.workload_txs],
            commit_ticks=self.commit_ticks,
            scenario=self.sc,
            end_tick=end_tick,
        )

    def _live_target(self, preferred: int) -> int | None:
        for off in range(self.n):
            candidate = (preferred + off) % self.n
            if candidate not in self.crashed:
                return candidate
        return None


def run_scenario(scenario: Scenario) -> Trace:
    """Execute the scenario's tick loop; deterministic for a fixed scenario."""
    return _Sim(scenario).run()


@dataclass(frozen=True)
class SafetyResult:
    ok: bool
    counterexample: tuple[int, tuple[str, ...]] | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_safety(trace: Trace) -> SafetyResult:
    """True iff, at every height, every validator that committed a block
    committed the same one (header hash compared, which pins the body)."""
    max_height = max(chain.height for chain in trace.final_chains)
    for height in range(1, max_height + 1):
        digests = {
            ledger.block_hash(chain.blocks[height].header)
            for chain in trace.final_chains
            if chain.height >= height
        }
        if len(digests) > 1:
            return SafetyResult(
                ok=False,
                counterexample=(height, tuple(sorted(d.hex() for d in digests))),
            )
    for i, chain in enumerate(trace.final_chains):
        for h in range(1, len(chain.blocks)):
            if chain.blocks[h].header.prev_hash != ledger.block_hash(
                chain.blocks[h - 1].header
            ):
                return SafetyResult(ok=False, counterexample=(h, (f"broken-linkage-v{i}",)))
    return SafetyResult(ok=True)


@dataclass(frozen=True)
class LivenessResult:
    within_tolerance: bool
    ok: bool
    stuck: tuple[tuple[str, int], ...] = ()  # (tx hash hex, validator index)

    @property
    def verdict(self) -> str:
        if not self.within_tolerance:
            return "outside-tolerance"
        return "pass" if self.ok else "fail"


def _peak_concurrent_crashes(scenario: Scenario) -> int:
    points = sorted(
        {c.crash_tick for c in scenario.crash_schedule}
        | {c.recover_tick for c in scenario.crash_schedule if c.recover_tick is not None}
    )
    peak = 0
    for t in points:
        down = sum(
            1
            for c in scenario.crash_schedule
            if c.crash_tick <= t and (c.recover_tick is None or c.recover_tick > t)
        )
        peak = max(peak, down)
    return peak


def check_liveness(trace: Trace, deadline_ticks: int | None = None) -> LivenessResult:
    """True iff every workload transaction committed on every validator that
    is alive at the end, by the deadline. Scenarios whose faults exceed the
    tolerance (too many concurrent crashes, or a partition that never heals)
    are reported as outside tolerance rather than as failures."""
    scenario = trace.scenario
    deadline = scenario.max_ticks if deadline_ticks is None else deadline_ticks
    tolerance = (scenario.n_validators - 1) // 2
    heals = all(w.end_tick <= deadline for w in scenario.partitions)
    within = _peak_concurrent_crashes(scenario) <= tolerance and heals
    stuck: list[tuple[str, int]] = []
    for i in range(trace.n_validators):
        if i in trace.crashed_at_end:
            continue
        for tx_hash in trace.workload_tx_hashes:
            committed_at = trace.commit_ticks[i].get(tx_hash)
            if committed_at is None or committed_at > deadline:
                stuck.append((tx_hash.hex(), i))
    return LivenessResult(within_tolerance=within, ok=not stuck, stuck=tuple(stuck))


# --- seeded adversarial campaign ---------------------------------------------


def campaign_scenario(index: int, base_seed: int = 0xC0FFEE) -> Scenario:
    """The index-th scenario of the seeded adversarial campaign: random
    validator count in {4, 5, 7}, drops up to 0.3, duplicates up to 0.1,
    crashes within the minority tolerance, and healing partitions."""
    rng = SplitMix64((base_seed << 20) ^ (index * 0x9E3779B97F4A7C15))
    n = (4, 5, 7)[rng.randrange(0, 2)]
    drop = rng.uniform() * 0.3
    dup = rng.uniform() * 0.1
    delay = (1, 1 + rng.randrange(0, 3))
    tolerance = (n - 1) // 2
    crashes: list[CrashEvent] = []
    crash_count = rng.randrange(0, tolerance)
    victims: list[int] = []
    while len(victims) < crash_count:
        v = rng.randrange(0, n - 1)
        if v not in victims:
            victims.append(v)
    for v in victims:
        crash_tick = rng.randrange(5, 60)
        recovers = rng.uniform() < 0.6
        recover_tick = crash_tick + rng.randrange(10, 50) if recovers else None
        crashes.append(CrashEvent(v, crash_tick, recover_tick))
    partitions: list[PartitionWindow] = []
    if rng.uniform() < 0.5:
        start = rng.randrange(10, 50)
        end = start + rng.randrange(10, 40)
        cut = 1 + rng.randrange(0, n - 2)
        members = list(range(n))
        groups = (tuple(members[:cut]), tuple(members[cut:]))
        partitions.append(PartitionWindow(start, end, groups))
    # Submissions go to a validator that never crashes: a correct client
    # retries until a responsive node accepts, so modeling injection into a
    # node that dies forever would test client behavior, not the protocol.
    stable = [v for v in range(n) if v not in victims]
    workload = tuple(
        WorkloadEntry(
            tick=1 + rng.randrange(0, 29),
            record=ehr.PatientRecord(
                patient_id=f"p{index}-{k}", name=f"Patient {index}-{k}"
            ),
            target=stable[rng.randrange(0, len(stable) - 1)],
        )
        for k in range(1 + rng.randrange(0, 2))
    )
    return Scenario(
        n_validators=n,
        seed=rng.next_u64(),
        drop_rate=drop,
        delay_distribution=delay,
        duplicate_rate=dup,
        partitions=tuple(partitions),
        crash_schedule=tuple(crashes),
        workload=workload,
        max_ticks=700,
    )


# --- exhaustive small-model exploration --------------------------------------


@dataclass
class _ModelState:
    engines: tuple[consensus.Engine, ...]
    engine_keys: tuple  # cached model_key per engine
    chain_tips: tuple  # cached (height, tip-digest chain) per engine
    inflight: tuple[tuple[int, bytes], ...]  # (recipient, payload)
    timers: tuple[tuple[int, int, int], ...]  # (validator, height, round)
    crashed: frozenset[int]
    deliveries_left: int
    timer_fires_left: int
    crashes_left: int


@dataclass(frozen=True)
class ExploreResult:
    ok: bool
    states_explored: int
    counterexample: tuple[str, ...] | None = None


def _chain_digests(engine: consensus.Engine) -> tuple[bytes, ...]:
    return tuple(ledger.block_hash(b.header) for b in engine.chain.blocks)


def _model_safety(chain_tips: tuple) -> tuple[int, tuple[str, ...]] | None:
    max_height = max(len(c) - 1 for c in chain_tips)
    for height in range(1, max_height + 1):
        digests = {c[height] for c in chain_tips if len(c) > height}
        if len(digests) > 1:
            return (height, tuple(sorted(d.hex()[:16] for d in digests)))
    return None


def explore_schedules(
    n_validators: int = 3,
    max_deliveries: int = 6,
    max_timer_fires: int = 2,
    max_crashes: int = 1,
    n_transactions: int = 1,
    state_cap: int = 5_000_000,
) -> ExploreResult:
    """Brute-force every delivery order of up to ``max_deliveries`` messages,
    letting the adversary fire round timers out of order and crash validators,
    and assert the agreement invariant in every reachable state. Undelivered
    messages model drops: every prefix of every order is itself a checked
    state, so a message "lost forever" is covered by the order that never
    delivers it."""
    sim = _Sim(
        Scenario(
            n_validators=n_validators,
            seed=1,
            workload=tuple(
                WorkloadEntry(
                    tick=0,
                    record=ehr.PatientRecord(patient_id=f"m{k}", name=f"Model {k}"),
                )
                for k in range(n_transactions)
            ),
            max_ticks=1,
        )
    )
    id_to_index = sim.id_to_index
    inflight: list[tuple[int, bytes]] = []
    timers: dict[int, tuple[int, int]] = {}

    def collect(engine: consensus.Engine, i: int, into: list[tuple[int, bytes]]) -> None:
        for action in engine.take_actions():
            if isinstance(action, consensus.Broadcast):
                for j in range(n_validators):
                    if j != i:
                        into.append((j, action.payload))
            elif isinstance(action, consensus.Send):
                j = id_to_index.get(action.to)
                if j is not None and j != i:
                    into.append((j, action.payload))
            elif isinstance(action, consensus.SetTimer):
                timers[i] = (action.height, action.round)

    for i in range(n_validators):
        sim.engines[i].start()
        collect(sim.engines[i], i, inflight)
    for *_, tx in sim.workload_txs:
        sim.engines[0].submit_transaction(tx)
        collect(sim.engines[0], 0, inflight)

    engines = tuple(sim.engines)
    root = _ModelState(
        engines=engines,
        engine_keys=tuple(e.model_key() for e in engines),
        chain_tips=tuple(_chain_digests(e) for e in engines),
        inflight=tuple(inflight),
        timers=tuple((v, h, r) for v, (h, r) in sorted(timers.items())),
        crashed=frozenset(),
        deliveries_left=max_deliveries,
        timer_fires_left=max_timer_fires,
        crashes_left=max_crashes,
    )

    payload_digests: dict[bytes, bytes] = {}

    def digest_of(payload: bytes) -> bytes:
        d = payload_digests.get(payload)
        if d is None:
            d = hashlib.sha256(payload).digest()[:12]
            payload_digests[payload] = d
        return d

    visited: set = set()
    explored = 0
    stack: list[tuple[_ModelState, tuple[str, ...]]] = [(root, ())]
    while stack:
        state, path = stack.pop()
        violation = _model_safety(state.chain_tips)
        if violation is not None:
            return ExploreResult(
                ok=False,
                states_explored=explored,
                counterexample=path
                + (f"violation at height {violation[0]}: {violation[1]}",),
            )
        key = (
            state.engine_keys,
            tuple(sorted((r, digest_of(p)) for r, p in state.inflight)),
            state.timers,
            state.crashed,
            state.deliveries_left,
            state.timer_fires_left,
            state.crashes_left,
        )
        if key in visited:
            continue
        visited.add(key)
        explored += 1
        if explored >= state_cap:
            break

        timer_map = {v: (h, r) for v, h, r in state.timers}

        def push(
            touched: int | None,
            engine: consensus.Engine | None,
            new_out: list[tuple[int, bytes]],
            inflight: tuple[tuple[int, bytes], ...],
            timers_after: dict[int, tuple[int, int]],
            crashed: frozenset[int],
            spend: tuple[int, int, int],
            step: str,
        ) -> None:
            if touched is None:
                new_engines = state.engines
                new_keys = state.engine_keys
                new_tips = state.chain_tips
            else:
                new_engines = (
                    state.engines[:touched] + (engine,) + state.engines[touched + 1 :]
                )
                new_keys = (
                    state.engine_keys[:touched]
                    + (engine.model_key(),)
                    + state.engine_keys[touched + 1 :]
                )
                new_tips = (
                    state.chain_tips[:touched]
                    + (_chain_digests(engine),)
                    + state.chain_tips[touched + 1 :]
                )
            stack.append(
                (
                    _ModelState(
                        engines=new_engines,
                        engine_keys=new_keys,
                        chain_tips=new_tips,
                        inflight=inflight + tuple(new_out),
                        timers=tuple(
                            (v, h, r) for v, (h, r) in sorted(timers_after.items())
                        ),
                        crashed=crashed,
                        deliveries_left=state.deliveries_left - spend[0],
                        timer_fires_left=state.timer_fires_left - spend[1],
                        crashes_left=state.crashes_left - spend[2],
                    ),
                    path + (step,),
                )
            )

        if state.deliveries_left > 0:
            seen: set[tuple[int, bytes]] = set()
            for idx, (recipient, payload) in enumerate(state.inflight):
                if recipient in state.crashed or (recipient, payload) in seen:
                    continue
                seen.add((recipient, payload))
                engine = state.engines[recipient].clone()
                out: list[tuple[int, bytes]] = []
                timers_after = dict(timer_map)

                def gather(e: consensus.Engine, i: int) -> None:
                    for action in e.take_actions():
                        if isinstance(action, consensus.Broadcast):
                            for j in range(n_validators):
                                if j != i:
                                    out.append((j, action.payload))
                        elif isinstance(action, consensus.Send):
                            j = id_to_index.get(action.to)
                            if j is not None and j != i:
                                out.append((j, action.payload))
                        elif isinstance(action, consensus.SetTimer):
                            timers_after[i] = (action.height, action.round)

                engine.receive(payload)
                gather(engine, recipient)
                remaining = state.inflight[:idx] + state.inflight[idx + 1 :]
                push(
                    recipient,
                    engine,
                    out,
                    remaining,
                    timers_after,
                    state.crashed,
                    (1, 0, 0),
                    f"deliver->{recipient}",
                )
        if state.timer_fires_left > 0:
            for v, height, round_ in state.timers:
                if v in state.crashed:
                    continue
                engine = state.engines[v].clone()
                out = []
                timers_after = dict(timer_map)
                timers_after.pop(v, None)

                def gather2(e: consensus.Engine, i: int) -> None:
                    for action in e.take_actions():
                        if isinstance(action, consensus.Broadcast):
                            for j in range(n_validators):
                                if j != i:
                                    out.append((j, action.payload))
                        elif isinstance(action, consensus.Send):
                            j = id_to_index.get(action.to)
                            if j is not None and j != i:
                                out.append((j, action.payload))
                        elif isinstance(action, consensus.SetTimer):
                            timers_after[i] = (action.height, action.round)

                engine.handle_timeout(height, round_)
                gather2(engine, v)
                push(
                    v,
                    engine,
                    out,
                    state.inflight,
                    timers_after,
                    state.crashed,
                    (0, 1, 0),
                    f"timeout@{v}",
                )
        if state.crashes_left > 0:
            for v in range(n_validators):
                if v in state.crashed:
                    continue
                timers_after = dict(timer_map)
                timers_after.pop(v, None)
                push(
                    None,
                    None,
                    [],
                    state.inflight,
                    timers_after,
                    state.crashed | {v},
                    (0, 0, 1),
                    f"crash@{v}",
                )
    return ExploreResult(ok=True, states_explored=explored)
