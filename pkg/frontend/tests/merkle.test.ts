import { describe, expect, it } from "vitest";

import { bytesToHex, hexToBytes, utf8 } from "../src/canonical.js";
import { ProofSibling, leafHash, nodeHash, verifyProof } from "../src/merkle.js";

// Golden tree vectors (0x00 leaf / 0x01 node prefixes, odd node carried up),
// frozen from the hand-rolled oracle script.
const GOLDEN_LEAF_A = "022a6979e6dab7aa5ae4c3e5e45f7e977112a7e63593820dbec1ec738a24f93c";
const GOLDEN_ROOT_ABCD = "33376a3bd63e9993708a84ddfe6c28ae58b83505dd1fed711bd924ec5a6239f0";
const GOLDEN_ROOT_ABC = "36642e73c2540ab121e3a6bf9545b0a24982cd830eb13d3cd19de3ce6c021ec1";
const GOLDEN_SIBLING_FOR_C = "b137985ff484fb600db93107c77b0365c80d78f5b429ded0fd97361d077999eb";

describe("hash primitives", () => {
  it("prefixes leaves with 0x00", async () => {
    expect(bytesToHex(await leafHash(utf8("a")))).toBe(GOLDEN_LEAF_A);
  });

  it("rebuilds the four-leaf golden root", async () => {
    const [a, b, c, d] = await Promise.all(
      ["a", "b", "c", "d"].map((s) => leafHash(utf8(s))),
    );
    const root = await nodeHash(await nodeHash(a!, b!), await nodeHash(c!, d!));
    expect(bytesToHex(root)).toBe(GOLDEN_ROOT_ABCD);
  });
});

describe("proof verification", () => {
  it("verifies the odd-carry proof for the third of three leaves", async () => {
    const siblings: ProofSibling[] = [
      { hash: hexToBytes(GOLDEN_SIBLING_FOR_C), side: "left" },
    ];
    expect(await verifyProof(hexToBytes(GOLDEN_ROOT_ABC), utf8("c"), siblings)).toBe(true);
  });

  it("verifies a single-leaf proof with no siblings", async () => {
    expect(await verifyProof(hexToBytes(GOLDEN_LEAF_A), utf8("a"), [])).toBe(true);
  });

  it("rejects a flipped sibling byte", async () => {
    const sibling = hexToBytes(GOLDEN_SIBLING_FOR_C);
    sibling[0]! ^= 1;
    expect(
      await verifyProof(hexToBytes(GOLDEN_ROOT_ABC), utf8("c"), [
        { hash: sibling, side: "left" },
      ]),
    ).toBe(false);
  });

  it("rejects the wrong side flag", async () => {
    expect(
      await verifyProof(hexToBytes(GOLDEN_ROOT_ABC), utf8("c"), [
        { hash: hexToBytes(GOLDEN_SIBLING_FOR_C), side: "right" },
      ]),
    ).toBe(false);
  });

  it("rejects the wrong leaf", async () => {
    expect(
      await verifyProof(hexToBytes(GOLDEN_ROOT_ABC), utf8("x"), [
        { hash: hexToBytes(GOLDEN_SIBLING_FOR_C), side: "left" },
      ]),
    ).toBe(false);
  });
});
