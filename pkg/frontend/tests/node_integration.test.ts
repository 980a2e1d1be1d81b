// Live-node flow, the browser client's acceptance path: submit the first
// demo intake row, resolve the receipt in the explorer, verify the Merkle
// proof locally, and surface a tampered store through the audit call.
//
// Needs a running node plus seeds; skipped otherwise:
//   LEDGEREHR_API=http://127.0.0.1:9301 \
//   LEDGEREHR_ORG_SEED=<hex> LEDGEREHR_ADMIN_SEED=<hex> npm test

import { describe, expect, it } from "vitest";

import {
  Session,
  auditChain,
  getBlock,
  getProof,
  getTx,
  health,
  listRecords,
  submitRecord,
} from "../src/api.js";
import { PatientRecord, hexToBytes } from "../src/canonical.js";
import { deriveIdentity } from "../src/crypto.js";
import { verifyProof } from "../src/merkle.js";

const BASE = process.env.LEDGEREHR_API;
const ORG_SEED = process.env.LEDGEREHR_ORG_SEED;
const ADMIN_SEED = process.env.LEDGEREHR_ADMIN_SEED;
const EXPECT_TAMPERED = process.env.LEDGEREHR_EXPECT_TAMPERED === "1";

const ROW1: PatientRecord = {
  patient_id: "1",
  name: "Abdur Rahim",
  date_of_birth: "1971-01-03",
  gender: "Male",
  age: "456",
  blood_pressure: "A+",
  medication_taken: "N/A",
  visit_date: "2021-01-07",
  consulted_prescriber: "Dr. Ali",
  temperature: "99",
  height: "5",
  weight: "69",
  contact_no: "0014373676",
};

async function sessionFor(seed: string, label: string): Promise<Session> {
  const identity = await deriveIdentity(seed);
  return { ...identity, baseUrl: BASE!, label };
}

async function waitFor<T>(probe: () => Promise<T | null>, timeoutMs = 15000): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  let last: unknown = null;
  while (Date.now() < deadline) {
    try {
      const got = await probe();
      if (got !== null) return got;
    } catch (error) {
      last = error;
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error(`timed out waiting: ${String(last)}`);
}

describe.skipIf(!BASE || !ORG_SEED || !ADMIN_SEED)("live node flow", () => {
  it("submits the intake form, resolves the receipt, and verifies the proof", async () => {
    const org = await sessionFor(ORG_SEED!, "org");
    expect((await health(BASE!)).status).toBe("ok");

    const receipt = await submitRecord(org, ROW1, "create");
    expect(receipt.tx_hash).toHaveLength(64);

    const row = await waitFor(async () => {
      const doc = await getTx(org, receipt.tx_hash);
      return doc ? doc.row : null;
    });
    expect(row.method).toBe("CreateRecord");
    expect(row.to).toBe("1");
    expect(row.value).toBe("0");
    expect(row.txn_fee).toBe("0");

    const records = await listRecords(org);
    expect(records.map((r) => r.record.patient_id)).toContain("1");
    const stored = records.find((r) => r.record.patient_id === "1");
    expect(stored?.record).toEqual(ROW1);

    const block = await getBlock(org, row.block);
    const proof = await getProof(org, receipt.tx_hash);
    const ok = await verifyProof(
      hexToBytes(block.body_root, 32),
      hexToBytes(proof.leaf),
      proof.siblings.map((s) => ({ hash: hexToBytes(s.hash, 32), side: s.side })),
    );
    expect(ok).toBe(true);

    // same proof, flipped leaf byte: must fail locally
    const leaf = hexToBytes(proof.leaf);
    leaf[0]! ^= 1;
    const bad = await verifyProof(
      hexToBytes(block.body_root, 32),
      leaf,
      proof.siblings.map((s) => ({ hash: hexToBytes(s.hash, 32), side: s.side })),
    );
    expect(bad).toBe(false);
  });

  it("surfaces the audit verdict for the stored chain", async () => {
    const admin = await sessionFor(ADMIN_SEED!, "admin");
    const report = await auditChain(admin);
    if (EXPECT_TAMPERED) {
      expect(report.ok).toBe(false);
      expect(report.failure_height).not.toBeNull();
    } else {
      expect(report.ok).toBe(true);
    }
  });
});
