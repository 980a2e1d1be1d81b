// Inclusion-proof verification from first principles: the browser trusts
// only the block header's body root, never the server's word for it.

import { concat } from "./canonical.js";
import { sha256 } from "./crypto.js";

const LEAF_PREFIX = new Uint8Array([0x00]);
const NODE_PREFIX = new Uint8Array([0x01]);

export interface ProofSibling {
  hash: Uint8Array;
  side: "left" | "right";
}

export async function leafHash(leaf: Uint8Array): Promise<Uint8Array> {
  return sha256(concat(LEAF_PREFIX, leaf));
}

export async function nodeHash(left: Uint8Array, right: Uint8Array): Promise<Uint8Array> {
  return sha256(concat(NODE_PREFIX, left, right));
}

export async function verifyProof(
  root: Uint8Array,
  leaf: Uint8Array,
  siblings: ProofSibling[],
): Promise<boolean> {
  let acc = await leafHash(leaf);
  for (const { hash, side } of siblings) {
    acc = side === "left" ? await nodeHash(hash, acc) : await nodeHash(acc, hash);
  }
  if (acc.length !== root.length) return false;
  let diff = 0;
  for (let i = 0; i < acc.length; i++) diff |= (acc[i] ?? 0) ^ (root[i] ?? 0);
  return diff === 0;
}
