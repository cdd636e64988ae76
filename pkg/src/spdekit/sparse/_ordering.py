"""Fill-reducing orderings for symmetric sparsity patterns.

The ordering is computed once per pattern and cached by the factorisation
layer, so this is written for clarity: plain Python sets for the quotient
graph, a lazy heap for pivot selection.
"""

import heapq

import numpy as np


def natural_order(n):
    return np.arange(n, dtype=np.int64)


def amd_order(n, indptr, indices):
    """Approximate minimum degree ordering of a full symmetric pattern.

    ``indptr``/``indices`` describe the full (both triangles) pattern in
    compressed column form; the diagonal may be present or absent.
    Returns ``perm`` with ``perm[k]`` = the original index eliminated at
    step k.  Uses the quotient-graph formulation: eliminated pivots become
    elements, degrees of their neighbours are updated with the standard
    approximate bound, and elements swallowed by a new pivot are absorbed.
    """
    adj = [set() for _ in range(n)]
    for j in range(n):
        for p in range(indptr[j], indptr[j + 1]):
            i = indices[p]
            if i != j:
                adj[i].add(j)
                adj[j].add(i)

    elems = [set() for _ in range(n)]  # elements adjacent to each variable
    element_members = {}  # element id -> set of (possibly dead) variables
    esize = {}  # element id -> count of members still alive
    absorbed = set()
    alive = np.ones(n, dtype=bool)
    degree = [len(adj[i]) for i in range(n)]

    heap = [(degree[i], i) for i in range(n)]
    heapq.heapify(heap)

    perm = np.empty(n, dtype=np.int64)
    next_element = 0
    nelim = 0
    while nelim < n:
        d, p = heapq.heappop(heap)
        if not alive[p] or d != degree[p]:
            continue

        # Reach of the pivot: remaining explicit edges plus the members of
        # every element the pivot touches.
        lp = {i for i in adj[p] if alive[i]}
        for e in elems[p]:
            if e in absorbed:
                continue
            lp.update(i for i in element_members[e] if alive[i])
        lp.discard(p)

        alive[p] = False
        perm[nelim] = p
        nelim += 1

        old_elems = {e for e in elems[p] if e not in absorbed}
        for e in old_elems:
            absorbed.add(e)
            del element_members[e]
            del esize[e]

        eid = next_element
        next_element += 1
        element_members[eid] = lp
        esize[eid] = len(lp)

        # One pass over the reach counts, for every external element, how
        # many of its live members the new element already covers.
        overlap = {}
        for i in lp:
            elems[i] = {e for e in elems[i] if e not in absorbed}
            for e in elems[i]:
                overlap[e] = overlap.get(e, 0) + 1

        fully_covered = {e for e, c in overlap.items() if esize[e] - c == 0}
        for e in fully_covered:
            absorbed.add(e)
            del element_members[e]
            del esize[e]

        lp_size = len(lp)
        for i in lp:
            adj[i] -= lp
            adj[i].discard(p)
            elems[i] = {e for e in elems[i] if e not in fully_covered}
            external = sum(esize[e] - overlap[e] for e in elems[i])
            elems[i].add(eid)
            bound = min(
                n - nelim - 1,
                degree[i] + lp_size - 1,
                sum(alive[v] for v in adj[i]) + lp_size - 1 + external,
            )
            degree[i] = max(bound, 0)
            heapq.heappush(heap, (degree[i], i))

        # Pivots no longer reference their variable neighbours.
        adj[p].clear()
        elems[p].clear()

    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise AssertionError("ordering failed to produce a permutation")
    return perm


def fill_reducing_permutation(n, indptr, indices, method="amd"):
    if method == "amd":
        return amd_order(n, indptr, indices)
    if method == "natural":
        return natural_order(n)
    raise ValueError(f"unknown ordering {method!r}, expected 'amd' or 'natural'")
