// WebCrypto wrappers: SHA-256 digests and Ed25519 request/transaction
// signing. Private keys are imported from the same 32-byte hex seed files
// the node CLI generates and never leave this context.

import { bytesToHex, concat, hexToBytes, txPreimage, utf8 } from "./canonical.js";

const PKCS8_ED25519_PREFIX = hexToBytes("302e020100300506032b657004220420");

function subtle(): SubtleCrypto {
  const api = globalThis.crypto?.subtle;
  if (!api) throw new Error("WebCrypto is unavailable in this context");
  return api;
}

export async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await subtle().digest("SHA-256", data as BufferSource));
}

export async function importSigningKey(seedHex: string): Promise<CryptoKey> {
  const seed = hexToBytes(seedHex, 32);
  const pkcs8 = concat(PKCS8_ED25519_PREFIX, seed);
  return subtle().importKey("pkcs8", pkcs8 as BufferSource, { name: "Ed25519" }, true, ["sign"]);
}

export async function derivePublicKey(key: CryptoKey): Promise<Uint8Array> {
  const jwk = await subtle().exportKey("jwk", key);
  if (!jwk.x) throw new Error("cannot derive the public key from this key");
  return fromBase64Url(jwk.x);
}

export async function identityIdForPublicKey(publicKey: Uint8Array): Promise<Uint8Array> {
  return (await sha256(publicKey)).slice(0, 16);
}

export async function sign(key: CryptoKey, data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await subtle().sign({ name: "Ed25519" }, key, data as BufferSource));
}

export async function verify(
  publicKey: Uint8Array,
  data: Uint8Array,
  signature: Uint8Array,
): Promise<boolean> {
  const key = await subtle().importKey(
    "raw",
    publicKey as BufferSource,
    { name: "Ed25519" },
    false,
    ["verify"],
  );
  return subtle().verify({ name: "Ed25519" }, key, signature as BufferSource, data as BufferSource);
}

export async function computeTxHash(
  opKind: number,
  payload: Uint8Array,
  actorId: Uint8Array,
  timestampMs: number,
): Promise<Uint8Array> {
  return sha256(txPreimage(opKind, payload, actorId, timestampMs));
}

export async function requestDigest(body: Uint8Array, timestampMs: number): Promise<Uint8Array> {
  return sha256(concat(body, utf8(String(timestampMs))));
}

export interface DerivedIdentity {
  actorIdHex: string;
  publicKeyHex: string;
  signingKey: CryptoKey;
}

export async function deriveIdentity(seedHex: string): Promise<DerivedIdentity> {
  const signingKey = await importSigningKey(seedHex);
  const publicKey = await derivePublicKey(signingKey);
  const actorId = await identityIdForPublicKey(publicKey);
  return {
    actorIdHex: bytesToHex(actorId),
    publicKeyHex: bytesToHex(publicKey),
    signingKey,
  };
}

function fromBase64Url(text: string): Uint8Array {
  const base64 = text.replace(/-/g, "+").replace(/_/g, "/");
  const padded = base64 + "=".repeat((4 - (base64.length % 4)) % 4);
  const raw = atob(padded);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}
