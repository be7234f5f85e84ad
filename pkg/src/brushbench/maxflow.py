"""Exact s-t max-flow / min-cut on 8-connected pixel grids.

Dinic's algorithm over a flat CSR arc list with float64 residuals. Terminal
capacities can be updated in place (with the usual add-a-constant-to-both
reparameterization for decreases), after which the solve continues from the
current residual state, which is what makes per-stroke and per-pixel
recycling cheap.

Labeling convention: source side = foreground (label 1);
cap(s->p) = cost of background, cap(p->t) = cost of foreground.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numba import njit

# residual capacities below this are treated as zero to avoid augmenting dust
EPS_CAP = 1e-12

# direction offsets of the 8-neighborhood, forward half: E, S, SE, SW
DIR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))
DIR_DISTS = (1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0))


class GridStructure(NamedTuple):
    h: int
    w: int
    arc_ptr: np.ndarray   # (n_nodes + 1,) CSR offsets; nodes are pixels, then s, t
    arc_to: np.ndarray    # (n_arcs,)
    arc_rev: np.ndarray   # (n_arcs,) index of the reverse arc
    s_arc: np.ndarray     # (n,) arc s->p
    t_arc: np.ndarray     # (n,) arc p->t
    dir_arc: np.ndarray   # (4, h, w) arc p->q per direction, -1 where invalid


@njit(cache=True)
def _build_structure(h, w):
    n = h * w
    s = n
    t = n + 1
    offs = np.array([[0, 1], [1, 0], [1, 1], [1, -1]], dtype=np.int64)

    deg = np.zeros(n + 2, dtype=np.int64)
    for p in range(n):
        deg[p] = 2  # p->s, p->t
    deg[s] = n
    deg[t] = n
    for d in range(4):
        dr, dc = offs[d, 0], offs[d, 1]
        for r in range(h):
            r2 = r + dr
            if r2 < 0 or r2 >= h:
                continue
            for c in range(w):
                c2 = c + dc
                if c2 < 0 or c2 >= w:
                    continue
                deg[r * w + c] += 1
                deg[r2 * w + c2] += 1

    arc_ptr = np.zeros(n + 3, dtype=np.int64)
    for u in range(n + 2):
        arc_ptr[u + 1] = arc_ptr[u] + deg[u]
    n_arcs = arc_ptr[n + 2]
    arc_to = np.empty(n_arcs, dtype=np.int64)
    arc_rev = np.empty(n_arcs, dtype=np.int64)
    slot = arc_ptr[:-1].copy()

    s_arc = np.empty(n, dtype=np.int64)
    t_arc = np.empty(n, dtype=np.int64)
    dir_arc = np.full((4, h, w), -1, dtype=np.int64)

    for p in range(n):
        a = slot[s]; slot[s] += 1
        b = slot[p]; slot[p] += 1
        arc_to[a] = p; arc_to[b] = s
        arc_rev[a] = b; arc_rev[b] = a
        s_arc[p] = a
        a = slot[p]; slot[p] += 1
        b = slot[t]; slot[t] += 1
        arc_to[a] = t; arc_to[b] = p
        arc_rev[a] = b; arc_rev[b] = a
        t_arc[p] = a

    for d in range(4):
        dr, dc = offs[d, 0], offs[d, 1]
        for r in range(h):
            r2 = r + dr
            if r2 < 0 or r2 >= h:
                continue
            for c in range(w):
                c2 = c + dc
                if c2 < 0 or c2 >= w:
                    continue
                p = r * w + c
                q = r2 * w + c2
                a = slot[p]; slot[p] += 1
                b = slot[q]; slot[q] += 1
                arc_to[a] = q; arc_to[b] = p
                arc_rev[a] = b; arc_rev[b] = a
                dir_arc[d, r, c] = a

    return arc_ptr, arc_to, arc_rev, s_arc, t_arc, dir_arc


@lru_cache(maxsize=16)
def grid_structure(h: int, w: int) -> GridStructure:
    arc_ptr, arc_to, arc_rev, s_arc, t_arc, dir_arc = _build_structure(h, w)
    return GridStructure(h, w, arc_ptr, arc_to, arc_rev, s_arc, t_arc, dir_arc)


@njit(cache=True)
def _fill_residuals(res, s_arc, t_arc, dir_arc, arc_rev, theta, caps, h, w):
    res[:] = 0.0
    n = h * w
    for p in range(n):
        th0 = theta[p, 0]
        th1 = theta[p, 1]
        m = th0 if th0 < th1 else th1
        res[s_arc[p]] = th0 - m
        res[t_arc[p]] = th1 - m
    for d in range(4):
        for r in range(h):
            for c in range(w):
                a = dir_arc[d, r, c]
                if a >= 0:
                    lam = caps[d, r, c]
                    res[a] = lam
                    res[arc_rev[a]] = lam


@njit(cache=True)
def _update_tlinks(res, s_arc, t_arc, idx, new0, new1, old0, old1):
    for i in range(len(idx)):
        p = idx[i]
        res[s_arc[p]] += new0[i] - old0[i]
        res[t_arc[p]] += new1[i] - old1[i]
        # negative residual: shift both t-links by a constant (energy offset only)
        if res[s_arc[p]] < 0.0:
            res[t_arc[p]] -= res[s_arc[p]]
            res[s_arc[p]] = 0.0
        if res[t_arc[p]] < 0.0:
            res[s_arc[p]] -= res[t_arc[p]]
            res[t_arc[p]] = 0.0


@njit(cache=True)
def _bfs_levels(arc_ptr, arc_to, res, level, queue, s, t):
    level[:] = -1
    level[s] = 0
    queue[0] = s
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        for a in range(arc_ptr[u], arc_ptr[u + 1]):
            if res[a] > EPS_CAP:
                v = arc_to[a]
                if level[v] < 0:
                    level[v] = level[u] + 1
                    queue[tail] = v
                    tail += 1
    return level[t] >= 0


@njit(cache=True)
def _blocking_flow(arc_ptr, arc_to, arc_rev, res, level, it, stack_node, path_arc, s, t):
    total = 0.0
    depth = 0
    stack_node[0] = s
    while True:
        u = stack_node[depth]
        if u == t:
            bn = np.inf
            for i in range(depth):
                if res[path_arc[i]] < bn:
                    bn = res[path_arc[i]]
            for i in range(depth):
                a = path_arc[i]
                res[a] -= bn
                res[arc_rev[a]] += bn
            total += bn
            for i in range(depth):
                if res[path_arc[i]] <= EPS_CAP:
                    depth = i
                    break
            continue
        advanced = False
        while it[u] < arc_ptr[u + 1]:
            a = it[u]
            v = arc_to[a]
            if res[a] > EPS_CAP and level[v] == level[u] + 1:
                path_arc[depth] = a
                depth += 1
                stack_node[depth] = v
                advanced = True
                break
            it[u] += 1
        if not advanced:
            if depth == 0:
                break
            level[u] = -1  # dead end for this phase
            depth -= 1
            it[stack_node[depth]] += 1
    return total


@njit(cache=True)
def _dinic(arc_ptr, arc_to, arc_rev, res, s, t):
    n_nodes = arc_ptr.shape[0] - 1
    level = np.empty(n_nodes, dtype=np.int32)
    queue = np.empty(n_nodes, dtype=np.int64)
    it = np.empty(n_nodes, dtype=np.int64)
    stack_node = np.empty(n_nodes + 1, dtype=np.int64)
    path_arc = np.empty(n_nodes + 1, dtype=np.int64)
    total = 0.0
    while _bfs_levels(arc_ptr, arc_to, res, level, queue, s, t):
        for u in range(n_nodes):
            it[u] = arc_ptr[u]
        total += _blocking_flow(arc_ptr, arc_to, arc_rev, res, level, it,
                                stack_node, path_arc, s, t)
    return total


@njit(cache=True)
def _source_side(arc_ptr, arc_to, res, s, n, labels_out, queue, seen):
    seen[:] = False
    labels_out[:] = 0
    seen[s] = True
    queue[0] = s
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        for a in range(arc_ptr[u], arc_ptr[u + 1]):
            if res[a] > EPS_CAP:
                v = arc_to[a]
                if not seen[v]:
                    seen[v] = True
                    if v < n:
                        labels_out[v] = 1
                    queue[tail] = v
                    tail += 1


@njit(cache=True)
def _energy_of(labels, theta, caps, h, w):
    e = 0.0
    n = h * w
    for p in range(n):
        e += theta[p, labels[p]]
    offs = np.array([[0, 1], [1, 0], [1, 1], [1, -1]], dtype=np.int64)
    for d in range(4):
        dr, dc = offs[d, 0], offs[d, 1]
        for r in range(h):
            r2 = r + dr
            if r2 < 0 or r2 >= h:
                continue
            for c in range(w):
                c2 = c + dc
                if c2 < 0 or c2 >= w:
                    continue
                if labels[r * w + c] != labels[r2 * w + c2]:
                    e += caps[d, r, c]
    return e


@njit(cache=True)
def _augment_entry(arc_ptr, arc_to, arc_rev, res, entry_arc, p, s, t,
                   parent_arc, queue, visited):
    """Extra flow after raising the capacity of the single arc s->p.

    Every new augmenting path must start with that arc, so search p ~> t only.
    """
    total = 0.0
    while res[entry_arc] > EPS_CAP:
        visited[:] = False
        visited[p] = True
        visited[s] = True
        queue[0] = p
        head = 0
        tail = 1
        found = False
        while head < tail and not found:
            u = queue[head]
            head += 1
            for a in range(arc_ptr[u], arc_ptr[u + 1]):
                if res[a] > EPS_CAP:
                    v = arc_to[a]
                    if not visited[v]:
                        visited[v] = True
                        parent_arc[v] = a
                        if v == t:
                            found = True
                            break
                        queue[tail] = v
                        tail += 1
        if not found:
            break
        bn = res[entry_arc]
        v = t
        while v != p:
            a = parent_arc[v]
            if res[a] < bn:
                bn = res[a]
            v = arc_to[arc_rev[a]]
        res[entry_arc] -= bn
        res[arc_rev[entry_arc]] += bn
        v = t
        while v != p:
            a = parent_arc[v]
            res[a] -= bn
            res[arc_rev[a]] += bn
            v = arc_to[arc_rev[a]]
        total += bn
    return total


@njit(cache=True)
def _augment_exit(arc_ptr, arc_to, arc_rev, res, exit_arc, p, s, t,
                  parent_arc, queue, visited):
    """Extra flow after raising the capacity of the single arc p->t (s ~> p search)."""
    total = 0.0
    while res[exit_arc] > EPS_CAP:
        visited[:] = False
        visited[s] = True
        visited[t] = True
        queue[0] = s
        head = 0
        tail = 1
        found = False
        while head < tail and not found:
            u = queue[head]
            head += 1
            for a in range(arc_ptr[u], arc_ptr[u + 1]):
                if res[a] > EPS_CAP:
                    v = arc_to[a]
                    if not visited[v]:
                        visited[v] = True
                        parent_arc[v] = a
                        if v == p:
                            found = True
                            break
                        queue[tail] = v
                        tail += 1
        if not found:
            break
        bn = res[exit_arc]
        v = p
        while v != s:
            a = parent_arc[v]
            if res[a] < bn:
                bn = res[a]
            v = arc_to[arc_rev[a]]
        res[exit_arc] -= bn
        res[arc_rev[exit_arc]] += bn
        v = p
        while v != s:
            a = parent_arc[v]
            res[a] -= bn
            res[arc_rev[a]] += bn
            v = arc_to[arc_rev[a]]
        total += bn
    return total


@njit(cache=True)
def _min_marginal_flips(arc_ptr, arc_to, arc_rev, res_base, s_arc, t_arc,
                        base_labels, base_energy, h, w, clamp):
    """MM of the flipped label per pixel: base energy plus the extra flow
    forced by clamping that pixel to 1 - base_labels[p]."""
    n = h * w
    s = n
    t = n + 1
    n_nodes = n + 2
    out = np.empty(n, dtype=np.float64)
    res = np.empty_like(res_base)
    parent_arc = np.empty(n_nodes, dtype=np.int64)
    queue = np.empty(n_nodes, dtype=np.int64)
    visited = np.empty(n_nodes, dtype=np.bool_)
    for p in range(n):
        res[:] = res_base
        if base_labels[p] == 0:
            res[s_arc[p]] += clamp  # forbid bg -> force fg
            delta = _augment_entry(arc_ptr, arc_to, arc_rev, res, s_arc[p], p,
                                   s, t, parent_arc, queue, visited)
        else:
            res[t_arc[p]] += clamp  # forbid fg -> force bg
            delta = _augment_exit(arc_ptr, arc_to, arc_rev, res, t_arc[p], p,
                                  s, t, parent_arc, queue, visited)
        out[p] = base_energy + delta
    return out


class FlowSolver:
    """Owns residual state for one grid energy; supports incremental re-solves."""

    def __init__(self, h: int, w: int):
        self.struct = grid_structure(h, w)
        n_arcs = self.struct.arc_ptr[-1]
        self.res = np.zeros(n_arcs, dtype=np.float64)
        self.theta = np.zeros((h * w, 2), dtype=np.float64)
        self.caps = np.zeros((4, h, w), dtype=np.float64)
        self._dirty = True

    @property
    def n(self) -> int:
        return self.struct.h * self.struct.w

    def set_energy(self, theta: np.ndarray, caps: np.ndarray) -> None:
        """Load unary costs (n, 2) and pairwise caps (4, h, w); resets all flow."""
        st = self.struct
        self.theta = np.ascontiguousarray(theta, dtype=np.float64).reshape(self.n, 2)
        self.caps = np.ascontiguousarray(caps, dtype=np.float64)
        _fill_residuals(self.res, st.s_arc, st.t_arc, st.dir_arc, st.arc_rev,
                        self.theta, self.caps, st.h, st.w)
        self._dirty = True

    def update_tlinks(self, pixel_idx: np.ndarray, new_theta: np.ndarray) -> None:
        """Replace unary costs at the given flat pixel indices, recycling flow."""
        st = self.struct
        idx = np.ascontiguousarray(pixel_idx, dtype=np.int64)
        new = np.ascontiguousarray(new_theta, dtype=np.float64).reshape(-1, 2)
        old = self.theta[idx]
        _update_tlinks(self.res, st.s_arc, st.t_arc, idx,
                       new[:, 0].copy(), new[:, 1].copy(),
                       old[:, 0].copy(), old[:, 1].copy())
        self.theta[idx] = new
        self._dirty = True

    def solve(self) -> np.ndarray:
        """Run (or continue) the max-flow; returns labels as an (h, w) uint8 map."""
        st = self.struct
        n = self.n
        _dinic(st.arc_ptr, st.arc_to, st.arc_rev, self.res, n, n + 1)
        labels = np.empty(n, dtype=np.uint8)
        queue = np.empty(n + 2, dtype=np.int64)
        seen = np.empty(n + 2, dtype=np.bool_)
        _source_side(st.arc_ptr, st.arc_to, self.res, n, n, labels, queue, seen)
        self._dirty = False
        return labels.reshape(st.h, st.w)

    def energy_of(self, labels: np.ndarray) -> float:
        flat = np.ascontiguousarray(labels, dtype=np.uint8).reshape(-1)
        return float(_energy_of(flat, self.theta, self.caps,
                                self.struct.h, self.struct.w))

    def min_marginal_flips(self, base_labels: np.ndarray, clamp: float) -> np.ndarray:
        """Per pixel: best energy with that pixel forced to the non-optimal label.

        Must be called right after solve() so the residual encodes a max flow.
        """
        if self._dirty:
            raise RuntimeError("solve() must precede min_marginal_flips()")
        st = self.struct
        flat = np.ascontiguousarray(base_labels, dtype=np.uint8).reshape(-1)
        base_energy = self.energy_of(flat)
        out = _min_marginal_flips(st.arc_ptr, st.arc_to, st.arc_rev, self.res,
                                  st.s_arc, st.t_arc, flat, base_energy,
                                  st.h, st.w, clamp)
        return out.reshape(st.h, st.w)

    def clone(self) -> "FlowSolver":
        other = FlowSolver.__new__(FlowSolver)
        other.struct = self.struct
        other.res = self.res.copy()
        other.theta = self.theta.copy()
        other.caps = self.caps
        other._dirty = self._dirty
        return other
