"""Connected components of an undirected graph given as an edge list.

Hooking plus pointer jumping, vectorised with numpy: every round hooks each
root onto the smallest root among its neighbours, then compresses paths
until every vertex points at a root. Runs in O((n + m) log n) array work.
"""
from __future__ import annotations

import numpy as np


def label_components(n, i, j):
    """Component labels for ``n`` vertices and edges ``(i[k], j[k])``.

    Returns an int64 array ``lab`` with ``lab[v]`` the smallest vertex index
    of the component of ``v``.
    """
    parent = np.arange(n, dtype=np.int64)
    i = np.asarray(i, dtype=np.int64).ravel()
    j = np.asarray(j, dtype=np.int64).ravel()
    if i.shape != j.shape:
        raise ValueError("edge endpoint arrays must have equal length")
    if i.size and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= n):
        raise ValueError("edge endpoint out of range")
    if n == 0 or i.size == 0:
        return parent
    while True:
        ri, rj = parent[i], parent[j]
        live = ri != rj
        if not np.any(live):
            break
        ri, rj = ri[live], rj[live]
        lo = np.minimum(ri, rj)
        hi = np.maximum(ri, rj)
        # hook larger roots under the smallest neighbouring root
        np.minimum.at(parent, hi, lo)
        while True:
            nxt = parent[parent]
            if np.array_equal(nxt, parent):
                break
            parent = nxt
        i, j = i[live], j[live]
    return parent


def components(n, i, j):
    """List of components as sorted index arrays, ordered by smallest member."""
    lab = label_components(n, i, j)
    order = np.argsort(lab, kind="stable")
    cuts = np.flatnonzero(np.diff(lab[order])) + 1
    return [np.sort(c) for c in np.split(order, cuts)] if n else []


def n_components(n, i, j):
    lab = label_components(n, i, j)
    return int(np.count_nonzero(lab == np.arange(n)))
