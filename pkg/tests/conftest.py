"""Shared fixtures: deterministic keys, a signed chain builder, and a
single-node app factory with a request-signing client."""
from __future__ import annotations

import hashlib
import json
import os
import time

import pytest

from ledgerehr import consensus, ehr, identity, ledger, node, store

# The demo intake dataset used across the end-to-end tests. The values are
# deliberately messy (ages like "456", blood types in the pressure column,
# a malformed date in row 5): real intake data looks like this, and the
# system must store it faithfully while flagging what it can.
DEMO_ROWS = [
    ("1", "Abdur Rahim", "1971-01-03", "Male", "456", "A+", "N/A", "2021-01-07", "Dr. Ali", "99", "5", "69", "0014373676"),
    ("2", "Sharon Glasgow", "1969-09-22", "Female", "6001", "B+", "N/A", "2021-02-20", "Dr. Robert", "101", "8", "83", "0092340493"),
    ("3", "Harry Dorell", "1991-11-11", "Male", "110111", "B", "N/A", "2020-11-11", "AAA", "98", "6", "76", "123233241"),
    ("4", "Evika Salomon", "1988-09-22", "Female", "880", "B+", "Paracetamol", "2020-10-20", "Dr. Mar", "100", "5", "66", "009487090"),
    ("5", "Ilya Ilya", "1996-12-00", "Female", "883034", "110", "paracetamol", "2021-11-04", "dr. elight", "99", "160", "56", "965470266"),
    ("6", "rajsh veer", "1986-02-02", "Male", "36065", "110", "corvid-19", "2021-03-16", "dr. harany", "97", "185", "86", "965470266"),
    ("7", "Mohammad Hasan", "1985-03-13", "Male", "3406", "B", "N/A", "2021-03-11", "Dr. Ahmad", "98", "4", "66", "923492793"),
    ("8", "Abdur Shah", "1971-01-03", "Male", "4907", "A+", "N/A", "2021-01-09", "Dr. Ali", "99", "8", "69", "0014716679"),
    ("9", "rocky jayp", "1976-08-12", "Male", "3340", "125", "corvid", "2021-02-04", "dr. paul", "99", "185", "86", "965470266"),
    ("10", "kamlesh aya", "1996-04-02", "Male", "123", "120", "606-030", "2021-03-10", "Dr. Rehan", "97", "185", "86", "965470266"),
]


def demo_record(row: tuple[str, ...]) -> ehr.PatientRecord:
    return ehr.PatientRecord(*row)


def seeded_key(tag: bytes):
    seed = hashlib.sha256(b"ledgerehr-test-key:" + tag).digest()
    public, private = identity.keygen(seed)
    return identity.identity_id_for(public), public, private


@pytest.fixture(scope="session")
def validator_keys():
    """Four seeded validators: (ids, public key map, private key map)."""
    ids, pubs, privs = [], {}, {}
    for i in range(4):
        vid, public, private = seeded_key(b"validator-%d" % i)
        ids.append(vid)
        pubs[vid] = public
        privs[vid] = private
    return ids, pubs, privs


@pytest.fixture(scope="session")
def org_actor():
    return seeded_key(b"org-actor")


@pytest.fixture(scope="session")
def admin_actor():
    return seeded_key(b"admin-actor")


@pytest.fixture(scope="session")
def patient_actor():
    """Patient identity linked to record id "1"."""
    return seeded_key(b"patient-actor")


@pytest.fixture(scope="session")
def base_registry(org_actor, admin_actor, patient_actor):
    _, org_pub, _ = org_actor
    _, admin_pub, _ = admin_actor
    _, patient_pub, _ = patient_actor
    return identity.Registry.bootstrap(
        [
            identity.StakeholderIdentity.from_public_key(admin_pub, identity.Role.ADMIN),
            identity.StakeholderIdentity.from_public_key(org_pub, identity.Role.ORGANIZATIONAL),
            identity.StakeholderIdentity.from_public_key(
                patient_pub, identity.Role.PATIENT, linked_patient_id="1"
            ),
        ]
    )


def make_tx(org_actor, index: int, timestamp_ms: int | None = None) -> ehr.Transaction:
    actor_id, _, private = org_actor
    record = ehr.PatientRecord(patient_id=f"p{index}", name=f"Patient {index}")
    return ehr.make_transaction(
        ehr.OpKind.CREATE_RECORD,
        record,
        actor_id,
        timestamp_ms if timestamp_ms is not None else 1000 + index,
        private,
    )


def signed_chain(
    validator_keys, org_actor, n_blocks: int, txs_per_block: int = 1
) -> tuple[ledger.ChainState, int, dict[bytes, bytes]]:
    """Genesis plus ``n_blocks`` quorum-signed blocks, one self-contained
    helper for persistence and audit tests."""
    ids, pubs, privs = validator_keys
    quorum = len(ids) // 2 + 1
    chain = ledger.ChainState.from_genesis(ledger.make_genesis("ledgerehr-test", 0))
    counter = 0
    for height in range(1, n_blocks + 1):
        txs = []
        for _ in range(txs_per_block):
            txs.append(make_tx(org_actor, counter, timestamp_ms=height * 1000 + counter))
            counter += 1
        draft = ledger.assemble_block(chain.tip, txs, height * 1000, ids[height % len(ids)])
        digest = ledger.block_hash(draft.header)
        signatures = tuple(
            sorted((vid, identity.sign_payload(privs[vid], digest)) for vid in ids[:quorum])
        )
        block = ledger.Block(draft.header, draft.transactions, signatures)
        chain = ledger.append_block(chain, block, quorum, validator_keys=pubs)
    return chain, quorum, pubs


def write_chain_log(path: str, chain: ledger.ChainState) -> store.BlockLog:
    log = store.BlockLog(path)
    for block in chain.blocks:
        log.append(block)
    return log


# --- node app scaffolding ----------------------------------------------------


class ActorClient:
    """Signs requests the way a real stakeholder client would."""

    def __init__(self, http, actor_id: bytes, private):
        self.http = http
        self.actor_id = actor_id
        self.private = private

    def _headers(self, body: bytes, ts: int, tx_hash: bytes | None) -> dict[str, str]:
        digest = hashlib.sha256(body + str(ts).encode()).digest()
        headers = {
            "X-Actor-Id": self.actor_id.hex(),
            "X-Timestamp": str(ts),
            "X-Signature": identity.sign_payload(self.private, digest).hex(),
        }
        if tx_hash is not None:
            headers["X-Tx-Signature"] = identity.sign_payload(self.private, tx_hash).hex()
        if body:
            headers["Content-Type"] = "application/json"
        return headers

    def get(self, path: str, ts: int | None = None):
        ts = int(time.time() * 1000) if ts is None else ts
        return self.http.get(path, headers=self._headers(b"", ts, None))

    def post_record(self, path: str, record: ehr.PatientRecord, op: ehr.OpKind, method="post"):
        ts = int(time.time() * 1000)
        body = json.dumps(record.as_dict()).encode()
        try:
            tx_hash = ehr.compute_tx_hash(
                op, ehr.canonical_encode_record(record), self.actor_id, ts
            )
        except ehr.InvalidRecord:
            tx_hash = None  # let the server's validation answer
        headers = self._headers(body, ts, tx_hash)
        call = getattr(self.http, method)
        return call(path, content=body, headers=headers)

    def post_json(self, path: str, doc: dict, tx_hash: bytes | None = None, ts: int | None = None):
        ts = int(time.time() * 1000) if ts is None else ts
        body = json.dumps(doc).encode()
        return self.http.post(path, content=body, headers=self._headers(body, ts, tx_hash))

    def register_identity(self, public_key: bytes, role: str, linked: str | None = None):
        ts = int(time.time() * 1000)
        registered_at = ts
        ident = identity.StakeholderIdentity.from_public_key(
            public_key,
            {"Admin": identity.Role.ADMIN, "Organizational": identity.Role.ORGANIZATIONAL,
             "Patient": identity.Role.PATIENT}[role],
            linked,
            registered_at,
        )
        payload = identity.encode_identity(ident)
        tx_hash = ehr.compute_tx_hash(
            ehr.OpKind.REGISTER_IDENTITY, payload, self.actor_id, ts
        )
        doc = {
            "public_key": public_key.hex(),
            "role": role,
            "linked_patient_id": linked,
            "registered_at_ms": registered_at,
        }
        return self.post_json("/admin/identities", doc, tx_hash=tx_hash, ts=ts)


def write_node_setup(tmp_path, mode: str = "consortium") -> tuple[str, dict]:
    """Create key files and a config for a single-validator node, plus the
    bootstrap actor credentials the tests sign with."""
    node_id, node_pub, node_priv = seeded_key(b"node-key")
    admin_id, admin_pub, admin_priv = seeded_key(b"admin-actor")
    org_id, org_pub, org_priv = seeded_key(b"org-actor")
    patient_id, patient_pub, patient_priv = seeded_key(b"patient-actor")

    key_path = os.path.join(tmp_path, "node.seed")
    with open(key_path, "w") as fh:
        fh.write(hashlib.sha256(b"ledgerehr-test-key:node-key").hexdigest())
    data_dir = os.path.join(tmp_path, "data")
    config_doc = {
        "network_name": "ledgerehr-test",
        "genesis_time_ms": 0,
        "mode": mode,
        "listen": "127.0.0.1:9301",
        "data_dir": data_dir,
        "node_key_file": key_path,
        "validators": [{"public_key": node_pub.hex(), "address": ""}],
        "bootstrap_identities": [
            {"public_key": admin_pub.hex(), "role": "Admin"},
            {"public_key": org_pub.hex(), "role": "Organizational"},
            {"public_key": patient_pub.hex(), "role": "Patient", "linked_patient_id": "1"},
        ],
        "max_block_txs": 100,
        "tick_ms": 20,
        "base_timeout_ticks": 4,
        "timeout_cap_ticks": 32,
        "pow_difficulty_bits": 10,
    }
    config_path = os.path.join(tmp_path, "config.json")
    with open(config_path, "w") as fh:
        json.dump(config_doc, fh, indent=2)
    actors = {
        "admin": (admin_id, admin_pub, admin_priv),
        "org": (org_id, org_pub, org_priv),
        "patient": (patient_id, patient_pub, patient_priv),
        "node": (node_id, node_pub, node_priv),
    }
    return config_path, actors


@pytest.fixture()
def node_setup(tmp_path):
    return write_node_setup(str(tmp_path))


def wait_until(predicate, timeout: float = 8.0, interval: float = 0.02) -> bool:
    deadline = time.time() + timeout
    while time.time() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return predicate()
