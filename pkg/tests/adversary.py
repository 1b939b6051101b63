"""Adversarial namespace-proof generators for the completeness checks."""

from __future__ import annotations

import itertools
import random

from daledger.nmt import NamespacedMerkleTree, NamespaceProof, hash_leaf_data, verify_namespace_leaves


def make_tree(namespaces: list[int]) -> NamespacedMerkleTree:
    return NamespacedMerkleTree([hash_leaf_data(ns, bytes([i])) for i, ns in enumerate(namespaces)])


def true_indices(namespaces: list[int], nid: int) -> tuple[int, ...]:
    return tuple(i for i, ns in enumerate(namespaces) if ns == nid)


def subset_claims(tree: NamespacedMerkleTree, subsets):
    """(indices, proof) built from honest paths for each chosen index set."""
    for s in subsets:
        for start in {s[0], max(0, s[0] - 1)}:
            yield s, NamespaceProof(start, tuple(tree.path(i) for i in s), len(tree))


def absence_claims(tree: NamespacedMerkleTree):
    for j in range(len(tree)):
        yield (), NamespaceProof(j, (tree.path(j),), len(tree), tree.leaves[j])


def false_accepts(tree: NamespacedMerkleTree, namespaces: list[int], nid: int, subsets) -> int:
    truth = true_indices(namespaces, nid)
    bad = 0
    for s, proof in itertools.chain(subset_claims(tree, subsets), absence_claims(tree)):
        if s == truth:
            continue
        leaves = [tree.leaves[i] for i in s]
        if verify_namespace_leaves(tree.root, nid, leaves, proof):
            bad += 1
    return bad


def all_subsets(n: int):
    for r in range(1, n + 1):
        yield from itertools.combinations(range(n), r)


def exhaustive_small(max_leaves: int = 8, alphabet=(1, 2, 3)) -> tuple[int, int, int]:
    """(trees, claims checked, false accepts) over every sorted tree up to ``max_leaves``."""
    trees = checked = bad = 0
    for n in range(1, max_leaves + 1):
        subsets = list(all_subsets(n))
        for nss in itertools.combinations_with_replacement(alphabet, n):
            nss = list(nss)
            tree = make_tree(nss)
            trees += 1
            for nid in range(min(alphabet) - 1, max(alphabet) + 2):
                checked += 2 * len(subsets) + n
                bad += false_accepts(tree, nss, nid, subsets)
    return trees, checked, bad


def random_large(trials: int, leaves: int = 64, seed: int = 0) -> tuple[int, int]:
    """(claims checked, false accepts) for random trees: honest range with
    leaves dropped, shifted ranges, and absence claims."""
    rng = random.Random(seed)
    checked = bad = 0
    for _ in range(trials):
        nss = sorted(rng.randrange(1, 12) for _ in range(leaves))
        tree = make_tree(nss)
        nid = rng.choice(nss) if rng.random() < 0.8 else rng.choice([0, 12, rng.randrange(1, 12)])
        truth = true_indices(nss, nid)
        claims = []
        if truth:
            drop = rng.randrange(len(truth))
            claims.append(truth[:drop] + truth[drop + 1:])
            claims.append(truth[1:] + ((truth[-1] + 1,) if truth[-1] + 1 < leaves else ()))
            claims.append(tuple(sorted(rng.sample(range(leaves), rng.randrange(1, 6)))))
        else:
            claims.append((rng.randrange(leaves),))
        claims = [c for c in claims if c]
        for s, proof in subset_claims(tree, claims):
            checked += 1
            if s != truth and verify_namespace_leaves(tree.root, nid, [tree.leaves[i] for i in s], proof):
                bad += 1
        j = rng.randrange(leaves)
        checked += 1
        if truth and verify_namespace_leaves(tree.root, nid, [],
                                             NamespaceProof(j, (tree.path(j),), leaves, tree.leaves[j])):
            bad += 1
    return checked, bad
