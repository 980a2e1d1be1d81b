"""The running node: HTTP service wiring transport, consensus, ledger,
persistence, and the explorer together.

Authentication is signature-based and stateless: every request (except
/health) carries the actor's identity handle, a millisecond timestamp,
and an Ed25519 signature over SHA-256(body || timestamp). Mutations
additionally carry the actor's signature over the transaction hash, so
the chain records end-to-end non-repudiable operations without the node
ever holding a stakeholder's private key.

Reads are served from an immutable snapshot of committed state that is
swapped wholesale after each commit; the pending pool is never served.
All ledger mutations funnel through one asyncio queue consumed by a
single pipeline task, which keeps the single-writer discipline while
requests return 202 receipts immediately.
"""
from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import os
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import codec, consensus, ehr, identity, ledger, merkle, store

logger = logging.getLogger(__name__)

REPLAY_WINDOW_MS = 300_000
PAGE_SIZE = 10

_ROLE_NAMES = {
    "Admin": identity.Role.ADMIN,
    "Organizational": identity.Role.ORGANIZATIONAL,
    "Patient": identity.Role.PATIENT,
}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class BootstrapIdentity:
    public_key: bytes
    role: identity.Role
    linked_patient_id: str | None = None
    registered_at_ms: int = 0


@dataclass(frozen=True)
class ValidatorEntry:
    public_key: bytes
    address: str  # base URL of the peer's HTTP endpoint


@dataclass(frozen=True)
class NodeConfig:
    network_name: str
    genesis_time_ms: int
    mode: str
    listen: str
    data_dir: str
    node_key_file: str
    validators: tuple[ValidatorEntry, ...]
    bootstrap_identities: tuple[BootstrapIdentity, ...]
    max_block_txs: int = 100
    tick_ms: int = 100
    base_timeout_ticks: int = 8
    timeout_cap_ticks: int = 64
    pow_difficulty_bits: int = 12

    @classmethod
    def from_file(cls, path: str) -> "NodeConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "NodeConfig":
        def resolve(p: str) -> str:
            return p if os.path.isabs(p) else os.path.join(base_dir, p)

        try:
            mode = doc.get("mode", ledger.MODE_CONSORTIUM)
            if mode not in (ledger.MODE_CONSORTIUM, ledger.MODE_POW_DEMO):
                raise ConfigError(f"unknown mode {mode!r}")
            validators = tuple(
                ValidatorEntry(
                    public_key=codec.from_hex(v["public_key"], 32),
                    address=v.get("address", ""),
                )
                for v in doc.get("validators", ())
            )
            bootstrap = tuple(
                BootstrapIdentity(
                    public_key=codec.from_hex(b["public_key"], 32),
                    role=_ROLE_NAMES[b["role"]],
                    linked_patient_id=b.get("linked_patient_id"),
                    registered_at_ms=int(b.get("registered_at_ms", 0)),
                )
                for b in doc.get("bootstrap_identities", ())
            )
            return cls(
                network_name=doc["network_name"],
                genesis_time_ms=int(doc.get("genesis_time_ms", 0)),
                mode=mode,
                listen=doc.get("listen", "127.0.0.1:9301"),
                data_dir=resolve(doc["data_dir"]),
                node_key_file=resolve(doc["node_key_file"]),
                validators=validators,
                bootstrap_identities=bootstrap,
                max_block_txs=int(doc.get("max_block_txs", 100)),
                tick_ms=int(doc.get("tick_ms", 100)),
                base_timeout_ticks=int(doc.get("base_timeout_ticks", 8)),
                timeout_cap_ticks=int(doc.get("timeout_cap_ticks", 64)),
                pow_difficulty_bits=int(doc.get("pow_difficulty_bits", 12)),
            )
        except (KeyError, ValueError, codec.CodecError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc


@dataclass(frozen=True)
class ExplorerRow:
    txn_hash: str
    method: str
    block: int
    timestamp_ms: int
    from_actor: str
    to: str
    value: str = "0"
    txn_fee: str = "0"

    def as_json(self, now_ms: int) -> dict:
        return {
            "txn_hash": self.txn_hash,
            "method": self.method,
            "block": self.block,
            "age_ms": max(0, now_ms - self.timestamp_ms),
            "timestamp_ms": self.timestamp_ms,
            "from": self.from_actor,
            "to": self.to,
            "value": self.value,
            "txn_fee": self.txn_fee,
        }


def _row_for(block: ledger.Block, tx: ehr.Transaction) -> ExplorerRow:
    if tx.op_kind is ehr.OpKind.REGISTER_IDENTITY:
        try:
            to = identity.decode_identity(tx.payload).identity_id.hex()
        except codec.CodecError:
            to = ""
    else:
        try:
            to = ehr.decode_record(tx.payload).patient_id
        except codec.CodecError:
            to = ""
    return ExplorerRow(
        txn_hash=tx.tx_hash.hex(),
        method=tx.op_kind.label,
        block=block.height,
        timestamp_ms=tx.timestamp_ms,
        from_actor=tx.actor_id.hex(),
        to=to,
    )


@dataclass
class Snapshot:
    """Immutable view of committed state; replaced wholesale on commit."""

    chain: ledger.ChainState
    state_view: ehr.StateView
    registry: identity.Registry
    rows: tuple[ExplorerRow, ...]  # newest first
    tx_index: dict[bytes, tuple[int, ehr.Transaction]]
    patient_order: tuple[str, ...]  # first-created order

    @classmethod
    def build(cls, chain: ledger.ChainState, bootstrap: identity.Registry) -> "Snapshot":
        state_view = ehr.project_state(chain)
        registry, _ = ehr.project_registry(chain, bootstrap)
        rows: list[ExplorerRow] = []
        tx_index: dict[bytes, tuple[int, ehr.Transaction]] = {}
        for block, tx in ledger.iter_transactions(chain):
            rows.append(_row_for(block, tx))
            tx_index[tx.tx_hash] = (block.height, tx)
        return cls(
            chain=chain,
            state_view=state_view,
            registry=registry,
            rows=tuple(reversed(rows)),
            tx_index=tx_index,
            patient_order=tuple(state_view.records.keys()),
        )

    def extended(self, block: ledger.Block, bootstrap: identity.Registry) -> "Snapshot":
        chain = ledger.ChainState(blocks=self.chain.blocks + (block,))
        return Snapshot.build(chain, bootstrap)


@dataclass
class AuthedActor:
    ident: identity.StakeholderIdentity
    timestamp_ms: int
    body: bytes
    tx_signature: bytes | None


class PeerTransport:
    async def send(self, validator_id: bytes, payload: bytes) -> None:  # pragma: no cover
        raise NotImplementedError


class HttpPeerTransport(PeerTransport):
    """Fire-and-forget POSTs to peer nodes; consensus tolerates loss."""

    def __init__(self, addresses: dict[bytes, str]):
        import httpx

        self.addresses = addresses
        self._client = httpx.AsyncClient(timeout=2.0)

    async def send(self, validator_id: bytes, payload: bytes) -> None:
        base = self.addresses.get(validator_id)
        if not base:
            return
        try:
            await self._client.post(
                f"{base}/peer/message",
                content=payload,
                headers={"content-type": "application/octet-stream"},
            )
        except Exception as exc:  # noqa: BLE001 - peer loss is expected
            logger.debug("peer send to %s failed: %s", base, exc)

    async def aclose(self) -> None:
        await self._client.aclose()


class NodeRuntime:
    """Owns the store, the consensus engine (or the demo miner), and the
    single-writer commit pipeline."""

    def __init__(self, config: NodeConfig, transport: PeerTransport | None = None):
        self.config = config
        os.makedirs(config.data_dir, exist_ok=True)
        seed = codec.from_hex(_read_key_file(config.node_key_file), 32)
        self.public_key, self.signing_key = identity.keygen(seed)
        self.me = identity.identity_id_for(self.public_key)

        validator_ids: list[bytes] = []
        keys: dict[bytes, bytes] = {}
        addresses: dict[bytes, str] = {}
        for entry in config.validators:
            vid = identity.identity_id_for(entry.public_key)
            validator_ids.append(vid)
            keys[vid] = entry.public_key
            addresses[vid] = entry.address
        if config.mode == ledger.MODE_CONSORTIUM:
            if not validator_ids:
                validator_ids = [self.me]
                keys[self.me] = self.public_key
            self.vset = consensus.ValidatorSet(tuple(validator_ids), keys)
            if self.me not in self.vset:
                raise ConfigError("this node's key is not in the validator set")
        else:
            self.vset = consensus.ValidatorSet((self.me,), {self.me: self.public_key})
        self.quorum = self.vset.quorum if config.mode == ledger.MODE_CONSORTIUM else 0

        self.bootstrap = identity.Registry.bootstrap(
            [
                identity.StakeholderIdentity.from_public_key(
                    b.public_key, b.role, b.linked_patient_id, b.registered_at_ms
                )
                for b in config.bootstrap_identities
            ]
        )
        self.genesis = ledger.make_genesis(config.network_name, config.genesis_time_ms)
        self.log = store.BlockLog(os.path.join(config.data_dir, "chain.log"))
        if self.log.exists():
            recovered = store.recover_chain(
                self.log,
                self.quorum,
                validator_keys=self.vset.public_keys,
                mode=config.mode,
                expected_genesis=self.genesis,
            )
            if not recovered.report.ok:
                raise ConfigError(
                    f"stored chain failed recovery audit: {recovered.report.describe()}"
                )
            chain = recovered.chain
        else:
            self.log.append(self.genesis)
            chain = ledger.ChainState.from_genesis(self.genesis)

        self.snapshot = Snapshot.build(chain, self.bootstrap)
        self.engine: consensus.Engine | None = None
        self.pow_target = ledger.target_from_difficulty_bits(config.pow_difficulty_bits)
        if config.mode == ledger.MODE_CONSORTIUM:
            self.engine = consensus.Engine(
                me=self.me,
                signing_key=self.signing_key,
                vset=self.vset,
                registry=self.snapshot.registry,
                chain=chain,
                config=consensus.EngineConfig(
                    max_block_txs=config.max_block_txs,
                    base_timeout_ticks=config.base_timeout_ticks,
                    timeout_cap_ticks=config.timeout_cap_ticks,
                ),
                clock=lambda: int(time.time() * 1000),
            )
        self.pow_pool: list[ehr.Transaction] = []
        self.transport = transport or HttpPeerTransport(addresses)
        self.queue: asyncio.Queue = asyncio.Queue()
        self._timer_task: asyncio.Task | None = None
        self._loop_task: asyncio.Task | None = None
        self._send_tasks: set[asyncio.Task] = set()

    # -- lifecycle ---------------------------------------------------------

    async def startup(self) -> None:
        self._loop_task = asyncio.create_task(self._pipeline())
        if self.engine is not None:
            self.engine.start()
            await self._process_actions()

    async def shutdown(self) -> None:
        if self._loop_task is not None:
            self.queue.put_nowait(("stop",))
            await self._loop_task
        if self._timer_task is not None:
            self._timer_task.cancel()
        for task in list(self._send_tasks):
            task.cancel()
        closer = getattr(self.transport, "aclose", None)
        if closer is not None:
            await closer()

    async def _pipeline(self) -> None:
        while True:
            item = await self.queue.get()
            kind = item[0]
            try:
                if kind == "stop":
                    return
                if self.engine is not None:
                    if kind == "tx":
                        self.engine.submit_transaction(item[1])
                    elif kind == "msg":
                        self.engine.receive(item[1])
                    elif kind == "timeout":
                        self.engine.handle_timeout(item[1], item[2])
                    await self._process_actions()
                elif kind == "tx":
                    self._pow_commit(item[1])
            except Exception:  # noqa: BLE001 - pipeline must survive bad input
                logger.exception("pipeline step failed")

    async def _process_actions(self) -> None:
        assert self.engine is not None
        for action in self.engine.take_actions():
            if isinstance(action, consensus.Broadcast):
                for vid in self.vset.validators:
                    if vid != self.me:
                        self._spawn_send(vid, action.payload)
            elif isinstance(action, consensus.Send):
                if action.to != self.me:
                    self._spawn_send(action.to, action.payload)
            elif isinstance(action, consensus.SetTimer):
                self._set_timer(action.height, action.round, action.duration_ticks)
            elif isinstance(action, consensus.Committed):
                self._commit(action.block)
            elif isinstance(action, consensus.Note):
                logger.debug("consensus %s: %s", action.kind, action.detail)

    def _spawn_send(self, vid: bytes, payload: bytes) -> None:
        task = asyncio.create_task(self.transport.send(vid, payload))
        self._send_tasks.add(task)
        task.add_done_callback(self._send_tasks.discard)

    def _set_timer(self, height: int, round_: int, ticks: int) -> None:
        if self._timer_task is not None:
            self._timer_task.cancel()

        async def fire() -> None:
            await asyncio.sleep(ticks * self.config.tick_ms / 1000)
            self.queue.put_nowait(("timeout", height, round_))

        self._timer_task = asyncio.create_task(fire())

    def _commit(self, block: ledger.Block) -> None:
        self.log.append(block)
        self.snapshot = self.snapshot.extended(block, self.bootstrap)
        if self.engine is not None:
            self.engine.registry = self.snapshot.registry
        logger.info(
            "committed height=%d txs=%d hash=%s",
            block.height,
            len(block.transactions),
            ledger.block_hash(block.header).hex()[:16],
        )

    def _pow_commit(self, tx: ehr.Transaction) -> None:
        self.pow_pool.append(tx)
        while self.queue.qsize():  # batch whatever else already arrived
            try:
                extra = self.queue.get_nowait()
            except asyncio.QueueEmpty:
                break
            if extra[0] == "tx":
                self.pow_pool.append(extra[1])
            else:
                self.queue.put_nowait(extra)  # not ours to consume
                break
        txs = self.pow_pool[: self.config.max_block_txs]
        self.pow_pool = self.pow_pool[len(txs) :]
        block = ledger.mine_block(
            self.snapshot.chain.tip,
            txs,
            max(int(time.time() * 1000), self.snapshot.chain.tip.header.timestamp_ms),
            self.me,
            self.pow_target,
        )
        self._commit(block)

    # -- submission helpers -------------------------------------------------

    def pool_size(self) -> int:
        if self.engine is not None:
            return len(self.engine.pool)
        return len(self.pow_pool)

    async def submit(self, tx: ehr.Transaction) -> int:
        position = self.pool_size() + self.queue.qsize() + 1
        await self.queue.put(("tx", tx))
        return position

    async def deliver_peer_message(self, payload: bytes) -> None:
        await self.queue.put(("msg", payload))

    def audit_stored_chain(self) -> ledger.AuditReport:
        """Re-read the log from disk and re-verify; in-memory state is not
        trusted for the audit."""
        recovered = store.recover_chain(
            self.log,
            self.quorum,
            validator_keys=self.vset.public_keys,
            mode=self.config.mode,
            expected_genesis=self.genesis,
        )
        return recovered.report


def _read_key_file(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read().strip()
    except OSError as exc:
        raise ConfigError(f"cannot read key file {path}: {exc}") from exc


# --- HTTP surface -----------------------------------------------------------


def create_app(config: NodeConfig, transport: PeerTransport | None = None) -> FastAPI:
    runtime = NodeRuntime(config, transport=transport)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await runtime.startup()
        yield
        await runtime.shutdown()

    app = FastAPI(title="ledgerehr node", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.runtime = runtime

    def now_ms() -> int:
        return int(time.time() * 1000)

    async def authed(request: Request) -> AuthedActor:
        actor_hex = request.headers.get("x-actor-id")
        ts_raw = request.headers.get("x-timestamp")
        sig_hex = request.headers.get("x-signature")
        if not actor_hex or not ts_raw or not sig_hex:
            raise HTTPException(401, "missing authentication headers")
        try:
            actor_id = codec.from_hex(actor_hex, 16)
            signature = codec.from_hex(sig_hex, 64)
            timestamp_ms = int(ts_raw)
        except (codec.CodecError, ValueError) as exc:
            raise HTTPException(401, f"malformed authentication header: {exc}")
        if abs(timestamp_ms - now_ms()) > REPLAY_WINDOW_MS:
            raise HTTPException(401, "timestamp outside replay window")
        ident = runtime.snapshot.registry.get(actor_id)
        if ident is None:
            raise HTTPException(401, "unknown actor")
        body = await request.body()
        digest = hashlib.sha256(body + ts_raw.encode("ascii")).digest()
        if not identity.verify_payload(ident.public_key, digest, signature):
            raise HTTPException(401, "request signature does not verify")
        tx_sig = None
        tx_sig_hex = request.headers.get("x-tx-signature")
        if tx_sig_hex:
            try:
                tx_sig = codec.from_hex(tx_sig_hex, 64)
            except codec.CodecError as exc:
                raise HTTPException(401, f"malformed transaction signature: {exc}")
        return AuthedActor(ident, timestamp_ms, body, tx_sig)

    def require(decision: identity.AccessDecision) -> None:
        if not decision.allowed:
            raise HTTPException(403, f"denied by policy rule: {decision.rule}")

    def parse_record(body: bytes) -> ehr.PatientRecord:
        try:
            doc = json.loads(body)
        except json.JSONDecodeError as exc:
            raise HTTPException(422, f"body is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise HTTPException(422, "body must be a JSON object")
        unknown = set(doc) - set(ehr.RECORD_FIELDS)
        if unknown:
            raise HTTPException(422, f"unknown fields: {sorted(unknown)}")
        return ehr.PatientRecord.from_dict(doc)

    async def submit_record(
        actor: AuthedActor, record: ehr.PatientRecord, op: ehr.OpKind
    ) -> JSONResponse:
        violations = ehr.validate_record(record)
        errors = ehr.blocking_violations(violations)
        if errors:
            raise HTTPException(
                422,
                detail=[{"field": v.field, "rule": v.rule} for v in errors],
            )
        if actor.tx_signature is None:
            raise HTTPException(401, "missing transaction signature header")
        payload = ehr.canonical_encode_record(record)
        tx_hash = ehr.compute_tx_hash(
            op, payload, actor.ident.identity_id, actor.timestamp_ms
        )
        if not identity.verify_payload(
            actor.ident.public_key, tx_hash, actor.tx_signature
        ):
            raise HTTPException(401, "transaction signature does not verify")
        tx = ehr.build_transaction(
            op, payload, actor.ident.identity_id, actor.timestamp_ms, actor.tx_signature
        )
        position = await runtime.submit(tx)
        return JSONResponse(
            status_code=202,
            content={
                "tx_hash": tx.tx_hash.hex(),
                "pool_position": position,
                "warnings": [
                    {"field": v.field, "rule": v.rule}
                    for v in violations
                    if v.severity == ehr.SEVERITY_WARNING
                ],
            },
        )

    @app.get("/health")
    async def health() -> dict:
        snap = runtime.snapshot
        return {
            "status": "ok",
            "network": config.network_name,
            "mode": config.mode,
            "height": snap.chain.height,
            "tip": snap.chain.tip_hash.hex(),
        }

    @app.post("/patients")
    async def create_patient(actor: AuthedActor = Depends(authed)) -> JSONResponse:
        record = parse_record(actor.body)
        require(
            identity.authorize(
                runtime.snapshot.registry,
                actor.ident.identity_id,
                identity.Action.ADD_RECORD,
                record.patient_id,
            )
        )
        if record.patient_id in runtime.snapshot.state_view.records:
            raise HTTPException(409, f"patient {record.patient_id} already exists")
        return await submit_record(actor, record, ehr.OpKind.CREATE_RECORD)

    @app.put("/patients/{patient_id}")
    async def update_patient(
        patient_id: str, actor: AuthedActor = Depends(authed)
    ) -> JSONResponse:
        record = parse_record(actor.body)
        if record.patient_id != patient_id:
            raise HTTPException(422, "record patient_id does not match path")
        require(
            identity.authorize(
                runtime.snapshot.registry,
                actor.ident.identity_id,
                identity.Action.UPDATE_RECORD,
                patient_id,
            )
        )
        if patient_id not in runtime.snapshot.state_view.records:
            raise HTTPException(409, f"patient {patient_id} does not exist yet")
        return await submit_record(actor, record, ehr.OpKind.UPDATE_RECORD)

    def record_json(patient_id: str, state: ehr.RecordState) -> dict:
        return {
            "record": state.record.as_dict(),
            "provenance": [h.hex() for h in state.provenance],
        }

    @app.get("/patients")
    async def list_patients(actor: AuthedActor = Depends(authed)) -> dict:
        snap = runtime.snapshot
        decision = identity.authorize(
            snap.registry, actor.ident.identity_id, identity.Action.LIST_RECORDS
        )
        if decision.allowed:
            records = [
                record_json(pid, snap.state_view.records[pid])
                for pid in snap.patient_order
            ]
            return {"records": records}
        # Patients fall back to the single record they may read.
        own = actor.ident.linked_patient_id
        own_decision = identity.authorize(
            snap.registry, actor.ident.identity_id, identity.Action.READ_RECORD, own
        )
        require(own_decision)
        state = snap.state_view.records.get(own or "")
        return {"records": [] if state is None else [record_json(own, state)]}

    @app.get("/patients/{patient_id}")
    async def get_patient(
        patient_id: str, actor: AuthedActor = Depends(authed)
    ) -> dict:
        snap = runtime.snapshot
        require(
            identity.authorize(
                snap.registry,
                actor.ident.identity_id,
                identity.Action.READ_RECORD,
                patient_id,
            )
        )
        state = snap.state_view.records.get(patient_id)
        if state is None:
            raise HTTPException(404, f"unknown patient {patient_id}")
        return record_json(patient_id, state)

    def visible_rows(snap: Snapshot, actor: AuthedActor) -> list[ExplorerRow]:
        require(
            identity.authorize(
                snap.registry, actor.ident.identity_id, identity.Action.READ_CHAIN
            )
        )
        if actor.ident.role is identity.Role.PATIENT:
            own = actor.ident.linked_patient_id
            return [row for row in snap.rows if row.to == own]
        return list(snap.rows)

    @app.get("/explorer/txs")
    async def explorer_txs(
        page: int = 1, actor: AuthedActor = Depends(authed)
    ) -> dict:
        if page < 1:
            raise HTTPException(422, "page starts at 1")
        snap = runtime.snapshot
        rows = visible_rows(snap, actor)
        start = (page - 1) * PAGE_SIZE
        now = now_ms()
        return {
            "page": page,
            "page_size": PAGE_SIZE,
            "total": len(rows),
            "rows": [row.as_json(now) for row in rows[start : start + PAGE_SIZE]],
        }

    def lookup_tx(snap: Snapshot, tx_hash_hex: str) -> tuple[int, ehr.Transaction]:
        try:
            tx_hash = codec.from_hex(tx_hash_hex, 32)
        except codec.CodecError:
            raise HTTPException(404, "not a transaction hash")
        found = snap.tx_index.get(tx_hash)
        if found is None:
            raise HTTPException(404, f"unknown transaction {tx_hash_hex}")
        return found

    def guard_tx_visibility(
        snap: Snapshot, actor: AuthedActor, block_height: int, tx: ehr.Transaction
    ) -> None:
        require(
            identity.authorize(
                snap.registry, actor.ident.identity_id, identity.Action.READ_CHAIN
            )
        )
        if actor.ident.role is identity.Role.PATIENT:
            block = snap.chain.block_at(block_height)
            row = _row_for(block, tx)
            if row.to != actor.ident.linked_patient_id:
                raise HTTPException(403, "denied by policy rule: patient-foreign-record")

    @app.get("/explorer/tx/{tx_hash_hex}")
    async def explorer_tx(
        tx_hash_hex: str, actor: AuthedActor = Depends(authed)
    ) -> dict:
        snap = runtime.snapshot
        height, tx = lookup_tx(snap, tx_hash_hex)
        guard_tx_visibility(snap, actor, height, tx)
        block = snap.chain.block_at(height)
        return {
            "row": _row_for(block, tx).as_json(now_ms()),
            "block_hash": ledger.block_hash(block.header).hex(),
        }

    @app.get("/explorer/blocks/{height}")
    async def explorer_block(
        height: int, actor: AuthedActor = Depends(authed)
    ) -> dict:
        snap = runtime.snapshot
        require(
            identity.authorize(
                snap.registry, actor.ident.identity_id, identity.Action.READ_CHAIN
            )
        )
        block = snap.chain.block_at(height)
        if block is None:
            raise HTTPException(404, f"no block at height {height}")
        header = block.header
        tx_hashes = [tx.tx_hash.hex() for tx in block.transactions]
        if actor.ident.role is identity.Role.PATIENT:
            own = actor.ident.linked_patient_id
            tx_hashes = [
                tx.tx_hash.hex()
                for tx in block.transactions
                if _row_for(block, tx).to == own
            ]
        return {
            "height": header.height,
            "version": header.version,
            "prev_hash": header.prev_hash.hex(),
            "timestamp_ms": header.timestamp_ms,
            "body_root": header.body_root.hex(),
            "target": header.target.hex(),
            "nonce": header.nonce,
            "proposer_id": header.proposer_id.hex(),
            "block_hash": ledger.block_hash(header).hex(),
            "tx_count": len(block.transactions),
            "commit_signature_count": len(block.commit_signatures),
            "tx_hashes": tx_hashes,
        }

    @app.get("/explorer/proof/{tx_hash_hex}")
    async def explorer_proof(
        tx_hash_hex: str, actor: AuthedActor = Depends(authed)
    ) -> dict:
        snap = runtime.snapshot
        height, tx = lookup_tx(snap, tx_hash_hex)
        guard_tx_visibility(snap, actor, height, tx)
        block = snap.chain.block_at(height)
        leaves = [ehr.encode_transaction(t) for t in block.transactions]
        index = next(
            i for i, t in enumerate(block.transactions) if t.tx_hash == tx.tx_hash
        )
        proof = merkle.prove(leaves, index)
        return {
            "tx_hash": tx.tx_hash.hex(),
            "block_height": height,
            "body_root": block.header.body_root.hex(),
            "leaf": leaves[index].hex(),
            "leaf_index": proof.leaf_index,
            "siblings": [
                {"hash": digest.hex(), "side": side} for digest, side in proof.siblings
            ],
        }

    @app.post("/admin/identities")
    async def register_identity(actor: AuthedActor = Depends(authed)) -> JSONResponse:
        require(
            identity.authorize(
                runtime.snapshot.registry,
                actor.ident.identity_id,
                identity.Action.REGISTER_IDENTITY,
            )
        )
        try:
            doc = json.loads(actor.body)
            public_key = codec.from_hex(doc["public_key"], 32)
            role = _ROLE_NAMES[doc["role"]]
            linked = doc.get("linked_patient_id")
            registered_at = int(doc.get("registered_at_ms", actor.timestamp_ms))
        except (json.JSONDecodeError, KeyError, ValueError, codec.CodecError) as exc:
            raise HTTPException(422, f"bad identity document: {exc}")
        try:
            ident = identity.StakeholderIdentity.from_public_key(
                public_key, role, linked, registered_at
            )
        except identity.IdentityError as exc:
            raise HTTPException(422, str(exc))
        if runtime.snapshot.registry.get(ident.identity_id) is not None:
            raise HTTPException(409, "identity already registered")
        if actor.tx_signature is None:
            raise HTTPException(401, "missing transaction signature header")
        payload = identity.encode_identity(ident)
        tx_hash = ehr.compute_tx_hash(
            ehr.OpKind.REGISTER_IDENTITY,
            payload,
            actor.ident.identity_id,
            actor.timestamp_ms,
        )
        if not identity.verify_payload(
            actor.ident.public_key, tx_hash, actor.tx_signature
        ):
            raise HTTPException(401, "transaction signature does not verify")
        tx = ehr.build_transaction(
            ehr.OpKind.REGISTER_IDENTITY,
            payload,
            actor.ident.identity_id,
            actor.timestamp_ms,
            actor.tx_signature,
        )
        position = await runtime.submit(tx)
        return JSONResponse(
            status_code=202,
            content={
                "tx_hash": tx.tx_hash.hex(),
                "identity_id": ident.identity_id.hex(),
                "pool_position": position,
            },
        )

    @app.post("/admin/verify")
    async def verify(actor: AuthedActor = Depends(authed)) -> dict:
        if actor.ident.role is not identity.Role.ADMIN:
            raise HTTPException(403, "denied by policy rule: admin-only")
        report = runtime.audit_stored_chain()
        return {
            "ok": report.ok,
            "height": report.height,
            "failure_height": report.failure_height,
            "violations": [
                {"rule": v.rule, "detail": v.detail} for v in report.violations
            ],
            "summary": report.describe(),
        }

    @app.post("/peer/message")
    async def peer_message(request: Request) -> Response:
        payload = await request.body()
        if runtime.engine is None:
            raise HTTPException(409, "node is not running consortium consensus")
        await runtime.deliver_peer_message(payload)
        return Response(status_code=202)

    return app
