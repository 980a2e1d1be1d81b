// Signed HTTP client for the node. Every call carries the actor handle, a
// millisecond timestamp, and an Ed25519 signature over SHA-256(body ||
// timestamp); mutations additionally sign the transaction hash so the chain
// records the stakeholder's own signature, not the node's.

import {
  OP_CREATE_RECORD,
  OP_UPDATE_RECORD,
  PatientRecord,
  bytesToHex,
  encodeRecord,
  hexToBytes,
  utf8,
} from "./canonical.js";
import { DerivedIdentity, computeTxHash, requestDigest, sign } from "./crypto.js";

export interface Session extends DerivedIdentity {
  baseUrl: string;
  label: string;
}

export interface Receipt {
  tx_hash: string;
  pool_position: number;
  warnings: { field: string; rule: string }[];
}

export interface RecordEntry {
  record: PatientRecord;
  provenance: string[];
}

export interface ExplorerRowDoc {
  txn_hash: string;
  method: string;
  block: number;
  age_ms: number;
  timestamp_ms: number;
  from: string;
  to: string;
  value: string;
  txn_fee: string;
}

export interface BlockDoc {
  height: number;
  prev_hash: string;
  timestamp_ms: number;
  body_root: string;
  block_hash: string;
  nonce: number;
  proposer_id: string;
  tx_count: number;
  commit_signature_count: number;
  tx_hashes: string[];
}

export interface ProofDoc {
  tx_hash: string;
  block_height: number;
  body_root: string;
  leaf: string;
  leaf_index: number;
  siblings: { hash: string; side: "left" | "right" }[];
}

export interface AuditDoc {
  ok: boolean;
  height: number;
  failure_height: number | null;
  violations: { rule: string; detail: string }[];
  summary: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`HTTP ${status}: ${typeof detail === "string" ? detail : JSON.stringify(detail)}`);
  }
}

export async function signedHeaders(
  session: Session,
  body: Uint8Array,
  timestampMs: number,
  txHash?: Uint8Array,
): Promise<Record<string, string>> {
  const digest = await requestDigest(body, timestampMs);
  const headers: Record<string, string> = {
    "X-Actor-Id": session.actorIdHex,
    "X-Timestamp": String(timestampMs),
    "X-Signature": bytesToHex(await sign(session.signingKey, digest)),
  };
  if (txHash) {
    headers["X-Tx-Signature"] = bytesToHex(await sign(session.signingKey, txHash));
  }
  if (body.length) headers["Content-Type"] = "application/json";
  return headers;
}

async function call(
  session: Session,
  method: string,
  path: string,
  body: Uint8Array | null,
  txHash?: Uint8Array,
): Promise<unknown> {
  const payload = body ?? new Uint8Array(0);
  const timestampMs = Date.now();
  const headers = await signedHeaders(session, payload, timestampMs, txHash);
  const response = await fetch(session.baseUrl + path, {
    method,
    headers,
    body: body ? (body as BodyInit) : undefined,
  });
  const text = await response.text();
  const doc = text ? JSON.parse(text) : null;
  if (!response.ok) throw new ApiError(response.status, doc?.detail ?? text);
  return doc;
}

export async function health(baseUrl: string): Promise<{ status: string; height: number }> {
  const response = await fetch(baseUrl + "/health");
  if (!response.ok) throw new ApiError(response.status, await response.text());
  return (await response.json()) as { status: string; height: number };
}

export async function submitRecord(
  session: Session,
  record: PatientRecord,
  mode: "create" | "update",
): Promise<Receipt> {
  const body = utf8(JSON.stringify(record));
  const op = mode === "create" ? OP_CREATE_RECORD : OP_UPDATE_RECORD;
  const timestampMs = Date.now();
  const txHash = await computeTxHash(
    op,
    encodeRecord(record),
    hexToBytes(session.actorIdHex, 16),
    timestampMs,
  );
  // the timestamp inside the transaction must match the header timestamp
  const digest = await requestDigest(body, timestampMs);
  const headers: Record<string, string> = {
    "X-Actor-Id": session.actorIdHex,
    "X-Timestamp": String(timestampMs),
    "X-Signature": bytesToHex(await sign(session.signingKey, digest)),
    "X-Tx-Signature": bytesToHex(await sign(session.signingKey, txHash)),
    "Content-Type": "application/json",
  };
  const path = mode === "create" ? "/patients" : `/patients/${encodeURIComponent(record.patient_id)}`;
  const response = await fetch(session.baseUrl + path, {
    method: mode === "create" ? "POST" : "PUT",
    headers,
    body: body as BodyInit,
  });
  const doc = await response.json();
  if (!response.ok) throw new ApiError(response.status, doc?.detail ?? doc);
  return doc as Receipt;
}

export async function listRecords(session: Session): Promise<RecordEntry[]> {
  const doc = (await call(session, "GET", "/patients", null)) as { records: RecordEntry[] };
  return doc.records;
}

export async function listTxs(
  session: Session,
  page: number,
): Promise<{ rows: ExplorerRowDoc[]; total: number; page_size: number }> {
  return (await call(session, "GET", `/explorer/txs?page=${page}`, null)) as {
    rows: ExplorerRowDoc[];
    total: number;
    page_size: number;
  };
}

export async function getTx(session: Session, txHashHex: string): Promise<{ row: ExplorerRowDoc; block_hash: string }> {
  return (await call(session, "GET", `/explorer/tx/${txHashHex}`, null)) as {
    row: ExplorerRowDoc;
    block_hash: string;
  };
}

export async function getBlock(session: Session, height: number): Promise<BlockDoc> {
  return (await call(session, "GET", `/explorer/blocks/${height}`, null)) as BlockDoc;
}

export async function getProof(session: Session, txHashHex: string): Promise<ProofDoc> {
  return (await call(session, "GET", `/explorer/proof/${txHashHex}`, null)) as ProofDoc;
}

export async function auditChain(session: Session): Promise<AuditDoc> {
  return (await call(session, "POST", "/admin/verify", utf8("{}"))) as AuditDoc;
}
