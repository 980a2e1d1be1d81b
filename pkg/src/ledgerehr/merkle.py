"""Binary Merkle tree over ordered byte-string leaves.

Leaf nodes hash as SHA-256(0x00 || leaf) and internal nodes as
SHA-256(0x01 || left || right). The distinct prefixes keep leaf and
internal preimages disjoint, so a leaf can never masquerade as an
internal node. When a level holds an odd number of nodes the last node
is carried up unchanged rather than duplicated, which avoids the
duplicate-leaf malleability of the bitcoin-style construction.

All functions are pure; inputs are never mutated.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

SIDE_LEFT = "left"
SIDE_RIGHT = "right"


class EmptyLeaves(ValueError):
    """A tree needs at least one leaf."""


class IndexOutOfRange(IndexError):
    """Requested leaf index is outside the leaf list."""


def leaf_hash(leaf: bytes) -> bytes:
    return hashlib.sha256(LEAF_PREFIX + leaf).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


@dataclass(frozen=True)
class MerkleProof:
    """Inclusion proof for one leaf.

    ``siblings`` lists (hash, side) pairs from the leaf level upward,
    where ``side`` names which side of the concatenation the sibling
    occupies. Levels where the node was carried up without a partner
    contribute no entry.
    """

    leaf_index: int
    siblings: tuple[tuple[bytes, str], ...]

    def __post_init__(self) -> None:
        if self.leaf_index < 0:
            raise IndexOutOfRange(f"leaf index must be >= 0, got {self.leaf_index}")
        for digest, side in self.siblings:
            if len(digest) != 32:
                raise ValueError("sibling hashes must be 32 bytes")
            if side not in (SIDE_LEFT, SIDE_RIGHT):
                raise ValueError(f"unknown side flag {side!r}")


def _next_level(level: list[bytes]) -> list[bytes]:
    nxt = []
    for i in range(0, len(level) - 1, 2):
        nxt.append(node_hash(level[i], level[i + 1]))
    if len(level) % 2 == 1:
        nxt.append(level[-1])
    return nxt


def build_root(leaves: Sequence[bytes]) -> bytes:
    """Compute the root committing to the ordered leaf list."""
    if not leaves:
        raise EmptyLeaves("cannot build a tree over zero leaves")
    level = [leaf_hash(leaf) for leaf in leaves]
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def prove(leaves: Sequence[bytes], index: int) -> MerkleProof:
    """Build the inclusion proof for ``leaves[index]``."""
    if not leaves:
        raise EmptyLeaves("cannot prove inclusion in an empty tree")
    if not 0 <= index < len(leaves):
        raise IndexOutOfRange(f"index {index} out of range for {len(leaves)} leaves")

    siblings: list[tuple[bytes, str]] = []
    level = [leaf_hash(leaf) for leaf in leaves]
    pos = index
    while len(level) > 1:
        last = len(level) - 1
        if pos == last and len(level) % 2 == 1:
            pass  # carried up unchanged, no sibling at this level
        elif pos % 2 == 0:
            siblings.append((level[pos + 1], SIDE_RIGHT))
        else:
            siblings.append((level[pos - 1], SIDE_LEFT))
        level = _next_level(level)
        pos //= 2
    return MerkleProof(leaf_index=index, siblings=tuple(siblings))


def verify_proof(root: bytes, leaf: bytes, proof: MerkleProof) -> bool:
    """True iff folding ``leaf`` through the proof reproduces ``root``."""
    acc = leaf_hash(leaf)
    for digest, side in proof.siblings:
        if side == SIDE_LEFT:
            acc = node_hash(digest, acc)
        else:
            acc = node_hash(acc, digest)
    return acc == root
