"""Compiled inner loops for sampling, simulation and enumeration.

All kernels are pure functions of their array arguments. Randomness is
passed in as pre-drawn uniforms so that every result is a deterministic
function of the caller's generator state.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def rr_fill(in_ptr, in_arcs, arc_src, arc_prob, targets, start, uniforms, members, sizes, mark, stamp):
    """Reverse BFS from ``targets[start:]`` until a buffer runs out.

    Arcs with probability in (0, 1) consume one uniform each, in visiting
    order; arcs pointing back into the current set are never flipped. A set
    interrupted by an exhausted buffer is rolled back completely so that the
    caller can resume with the unconsumed uniforms and get identical output.

    Returns ``(next_target, uniforms_used, members_used, stamp)``.
    """
    nu = uniforms.shape[0]
    cap = members.shape[0]
    upos = 0
    mpos = 0
    k = start
    nt = targets.shape[0]
    while k < nt:
        if mpos >= cap:
            break
        stamp += 1
        set_start = mpos
        u_start = upos
        w = targets[k]
        members[mpos] = w
        mpos += 1
        mark[w] = stamp
        head = set_start
        ok = True
        while head < mpos and ok:
            v = members[head]
            head += 1
            for j in range(in_ptr[v], in_ptr[v + 1]):
                e = in_arcs[j]
                u = arc_src[e]
                if mark[u] == stamp:
                    continue
                p = arc_prob[e]
                if p <= 0.0:
                    continue
                if p < 1.0:
                    if upos >= nu:
                        ok = False
                        break
                    r = uniforms[upos]
                    upos += 1
                    if r >= p:
                        continue
                if mpos >= cap:
                    ok = False
                    break
                mark[u] = stamp
                members[mpos] = u
                mpos += 1
        if not ok:
            mpos = set_start
            upos = u_start
            break
        sizes[k - start] = mpos - set_start
        k += 1
    return k, upos, mpos, stamp


@njit(cache=True)
def forward_reach_counts(out_ptr, out_arcs, arc_dst, arc_prob, uniforms, q_ptr, q_nodes, mark, queue, totals):
    """Add, for every world row of ``uniforms`` and every query seed set,
    the number of nodes reachable from the seeds through live arcs.

    Arc ``e`` is live in world ``r`` iff ``uniforms[r, e] < arc_prob[e]``.
    ``totals[q]`` accumulates integer counts; ``mark`` is scratch of size n
    holding stamps, and its last stamp is returned.
    """
    runs = uniforms.shape[0]
    nq = q_ptr.shape[0] - 1
    stamp = mark.max()
    for r in range(runs):
        for q in range(nq):
            stamp += 1
            tail = 0
            for j in range(q_ptr[q], q_ptr[q + 1]):
                s = q_nodes[j]
                if mark[s] != stamp:
                    mark[s] = stamp
                    queue[tail] = s
                    tail += 1
            head = 0
            while head < tail:
                v = queue[head]
                head += 1
                for j in range(out_ptr[v], out_ptr[v + 1]):
                    e = out_arcs[j]
                    u = arc_dst[e]
                    if mark[u] == stamp:
                        continue
                    if uniforms[r, e] < arc_prob[e]:
                        mark[u] = stamp
                        queue[tail] = u
                        tail += 1
            totals[q] += tail
    return stamp


@njit(cache=True)
def exact_expected_reach(n, live_src, live_dst, unc_src, unc_dst, unc_prob, seeds):
    """Expected reach of ``seeds`` by enumerating all 2^k worlds over the
    uncertain arcs; ``live_*`` arcs are always present."""
    k = unc_src.shape[0]
    nl = live_src.shape[0]
    active = np.zeros(n, dtype=np.bool_)
    total = 0.0
    for world in range(1 << k):
        w = 1.0
        for b in range(k):
            if (world >> b) & 1:
                w *= unc_prob[b]
            else:
                w *= 1.0 - unc_prob[b]
        if w == 0.0:
            continue
        active[:] = False
        for s in seeds:
            active[s] = True
        changed = True
        while changed:
            changed = False
            for a in range(nl):
                if active[live_src[a]] and not active[live_dst[a]]:
                    active[live_dst[a]] = True
                    changed = True
            for b in range(k):
                if (world >> b) & 1:
                    if active[unc_src[b]] and not active[unc_dst[b]]:
                        active[unc_dst[b]] = True
                        changed = True
        cnt = 0
        for v in range(n):
            if active[v]:
                cnt += 1
        total += w * cnt
    return total


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def exact_subset_table(n, live_src, live_dst, unc_src, unc_dst, unc_prob):
    """Expected reach of every subset of ``range(n)`` (bitmask-indexed), n <= 62."""
    k = unc_src.shape[0]
    nl = live_src.shape[0]
    size = 1 << n
    table = np.zeros(size, dtype=np.float64)
    reach = np.zeros(n, dtype=np.int64)
    cover = np.zeros(size, dtype=np.int64)
    for world in range(1 << k):
        w = 1.0
        for b in range(k):
            if (world >> b) & 1:
                w *= unc_prob[b]
            else:
                w *= 1.0 - unc_prob[b]
        if w == 0.0:
            continue
        for v in range(n):
            reach[v] = np.int64(1) << v
        changed = True
        while changed:
            changed = False
            for a in range(nl):
                u = live_src[a]
                new = reach[u] | reach[live_dst[a]]
                if new != reach[u]:
                    reach[u] = new
                    changed = True
            for b in range(k):
                if (world >> b) & 1:
                    u = unc_src[b]
                    new = reach[u] | reach[unc_dst[b]]
                    if new != reach[u]:
                        reach[u] = new
                        changed = True
        cover[0] = 0
        for s in range(1, size):
            low = s & (-s)
            bit = 0
            while (np.int64(1) << bit) != low:
                bit += 1
            cover[s] = cover[s ^ low] | reach[bit]
            table[s] += w * _popcount(cover[s])
    return table


@njit(cache=True)
def remove_sets_containing(node, idx_ptr, idx_sets, alive, offsets, members, alive_cov):
    """Kill every alive set that contains ``node``; returns how many died."""
    removed = 0
    for j in range(idx_ptr[node], idx_ptr[node + 1]):
        r = idx_sets[j]
        if not alive[r]:
            continue
        alive[r] = False
        removed += 1
        for t in range(offsets[r], offsets[r + 1]):
            alive_cov[members[t]] -= 1
    return removed


@njit(cache=True)
def count_sets_hit(seeds_mask, offsets, members):
    """Number of sets (alive or not) that intersect the seed mask."""
    hit = 0
    for r in range(offsets.shape[0] - 1):
        for t in range(offsets[r], offsets[r + 1]):
            if seeds_mask[members[t]]:
                hit += 1
                break
    return hit


@njit(cache=True)
def build_index(n, offsets, members):
    """Counting-sort inversion of a set family: node -> ids of sets containing it."""
    counts = np.zeros(n + 1, dtype=np.int64)
    for t in range(members.shape[0]):
        counts[members[t] + 1] += 1
    for v in range(n):
        counts[v + 1] += counts[v]
    ptr = counts.copy()
    sets = np.empty(members.shape[0], dtype=np.int64)
    fill = counts[:n].copy()
    for r in range(offsets.shape[0] - 1):
        for t in range(offsets[r], offsets[r + 1]):
            v = members[t]
            sets[fill[v]] = r
            fill[v] += 1
    return ptr, sets
