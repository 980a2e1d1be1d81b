// Canonical binary encodings, mirrored bit-for-bit from the node's wire
// contract: big-endian integers, 4-byte length prefixes, fixed field order.

export const RECORD_FIELDS = [
  "patient_id",
  "name",
  "date_of_birth",
  "gender",
  "age",
  "blood_pressure",
  "medication_taken",
  "visit_date",
  "consulted_prescriber",
  "temperature",
  "height",
  "weight",
  "contact_no",
] as const;

export type RecordField = (typeof RECORD_FIELDS)[number];
export type PatientRecord = Record<RecordField, string>;

export const OP_CREATE_RECORD = 1;
export const OP_UPDATE_RECORD = 2;
export const OP_REGISTER_IDENTITY = 3;

export function emptyRecord(): PatientRecord {
  const record = {} as PatientRecord;
  for (const field of RECORD_FIELDS) record[field] = "";
  return record;
}

export function u32(value: number): Uint8Array {
  if (!Number.isInteger(value) || value < 0 || value > 0xffffffff) {
    throw new RangeError(`u32 out of range: ${value}`);
  }
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, value, false);
  return out;
}

export function u64(value: number | bigint): Uint8Array {
  const big = typeof value === "bigint" ? value : BigInt(value);
  if (big < 0n || big > 0xffffffffffffffffn) {
    throw new RangeError(`u64 out of range: ${big}`);
  }
  const out = new Uint8Array(8);
  new DataView(out.buffer).setBigUint64(0, big, false);
  return out;
}

export function utf8(text: string): Uint8Array {
  return new TextEncoder().encode(text);
}

export function concat(...parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

export function varBytes(data: Uint8Array): Uint8Array {
  return concat(u32(data.length), data);
}

export function varStr(text: string): Uint8Array {
  return varBytes(utf8(text));
}

export function encodeRecord(record: PatientRecord): Uint8Array {
  return concat(...RECORD_FIELDS.map((field) => varStr(record[field] ?? "")));
}

export function txPreimage(
  opKind: number,
  payload: Uint8Array,
  actorId: Uint8Array,
  timestampMs: number,
): Uint8Array {
  if (actorId.length !== 16) throw new RangeError("actor id must be 16 bytes");
  return concat(new Uint8Array([opKind]), varBytes(payload), actorId, u64(timestampMs));
}

export function bytesToHex(data: Uint8Array): string {
  return Array.from(data, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function hexToBytes(hex: string, expectedLength?: number): Uint8Array {
  const clean = hex.trim().toLowerCase();
  if (!/^[0-9a-f]*$/.test(clean) || clean.length % 2 !== 0) {
    throw new RangeError("not a hex string");
  }
  const out = new Uint8Array(clean.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(clean.slice(i * 2, i * 2 + 2), 16);
  }
  if (expectedLength !== undefined && out.length !== expectedLength) {
    throw new RangeError(`expected ${expectedLength} bytes, got ${out.length}`);
  }
  return out;
}

export interface FieldIssue {
  field: RecordField;
  rule: string;
  severity: "error" | "warning";
}

// Mirrors the server's validation: non-empty identifiers are hard errors,
// unparseable dates are warnings (dirty intake data is stored but flagged).
export function validateRecord(record: PatientRecord): FieldIssue[] {
  const issues: FieldIssue[] = [];
  if (!record.patient_id) {
    issues.push({ field: "patient_id", rule: "must be non-empty", severity: "error" });
  }
  if (!record.name) {
    issues.push({ field: "name", rule: "must be non-empty", severity: "error" });
  }
  for (const field of ["date_of_birth", "visit_date"] as const) {
    const value = record[field];
    if (value && !isIsoDate(value)) {
      issues.push({ field, rule: "not an ISO-8601 date", severity: "warning" });
    }
  }
  return issues;
}

function isIsoDate(value: string): boolean {
  const match = /^(\d{4})-(\d{2})-(\d{2})$/.exec(value);
  if (!match) return false;
  const [, y, m, d] = match;
  const year = Number(y), month = Number(m), day = Number(d);
  if (month < 1 || month > 12 || day < 1) return false;
  const lengths = [31, isLeap(year) ? 29 : 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
  return day <= (lengths[month - 1] ?? 0);
}

function isLeap(year: number): boolean {
  return (year % 4 === 0 && year % 100 !== 0) || year % 400 === 0;
}
