"""Reverse-reachable (RR) set sampling and coverage bookkeeping.

An :class:`RRSample` holds every RR set drawn for one ad in flat CSR
arrays. Sets covered by a chosen seed are flagged dead rather than freed:
spread estimates count all sets, while candidate selection only looks at
the alive ones.
"""

from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import make_rng
from .exceptions import ValidationError
from .graph import AdCampaign, Graph

PILOT_SIZE = 10_000
SNAPSHOT_MAGIC = b"RRS1"

_UNIFORM_CHUNK = 1 << 16


@dataclass(frozen=True)
class RRSet:
    target: int
    members: frozenset

    def __contains__(self, node):
        return node in self.members


@dataclass
class SeedLedger:
    """Seeds of one ad in selection order with their recorded coverage."""

    entries: list = field(default_factory=list)

    def add(self, node: int, coverage: int) -> None:
        if any(v == node for v, _ in self.entries):
            raise ValidationError(f"node {node} already in ledger")
        self.entries.append([int(node), int(coverage)])

    @property
    def nodes(self) -> list[int]:
        return [v for v, _ in self.entries]

    @property
    def total_coverage(self) -> int:
        return sum(c for _, c in self.entries)

    def __len__(self):
        return len(self.entries)


def sample_rr_set(graph: Graph, campaign: AdCampaign, rng=None) -> RRSet:
    """Draw one RR set for a uniformly random target."""
    if graph.n < 1:
        raise ValidationError("cannot sample an RR set from an empty graph")
    rng = make_rng(rng)
    probs = graph.arc_probabilities(campaign)
    target = np.array([rng.integers(graph.n)], dtype=np.int64)
    members = np.empty(graph.n, dtype=np.int32)
    sizes = np.empty(1, dtype=np.int64)
    mark = np.zeros(graph.n, dtype=np.int64)
    # A single set never consumes more uniforms than there are arcs.
    uniforms = rng.random(graph.m)
    k, _, used, _ = _kernels.rr_fill(
        graph.in_ptr, graph.in_arcs, graph.sources, probs, target, 0, uniforms, members, sizes, mark, 0
    )
    assert k == 1
    return RRSet(int(target[0]), frozenset(members[:used].tolist()))


def sample_size_L(n: int, s: int, epsilon: float, ell: float, opt_lower_bound: float) -> int:
    """Number of RR sets that makes every seed set of size <= s accurate.

    ``ceil((8 + 2 eps) n (ell ln n + ln C(n, s) + ln 2) / (LB eps^2))``
    """
    if n < 1 or not 1 <= s <= n:
        raise ValidationError(f"need 1 <= s <= n, got s={s}, n={n}")
    if not epsilon > 0 or not ell > 0:
        raise ValidationError("epsilon and ell must be > 0")
    if not opt_lower_bound >= s:
        raise ValidationError(f"OPT lower bound {opt_lower_bound} is below s={s}")
    log_binom = math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1)
    value = (8 + 2 * epsilon) * n * (ell * math.log(n) + log_binom + math.log(2)) / (opt_lower_bound * epsilon**2)
    return int(math.ceil(value))


def latent_seed_size_update(s_current: int, budget: float, payment_current: float, c_max: float,
                            cpe: float, n: int, f_max: float) -> int:
    """Revised latent seed-set size for one ad.

    Adds ``floor((B - rho) / (c_max + cpe * n * F_max))`` seeds; the
    increment is 0 when the denominator vanishes.
    """
    denom = c_max + cpe * n * f_max
    if denom <= 0:
        return int(s_current)
    slack = max(0.0, budget - payment_current)
    return int(s_current) + max(0, int(math.floor(slack / denom)))


class RRSample:
    """RR sets of one ad together with alive flags and coverage counters.

    Args:
        graph, campaign: the instance the sets are drawn from.
        rng: seed or Generator; targets and coin flips use two derived streams.
        stratified: draw targets as successive random permutations of the
            nodes instead of independently, which keeps each target uniform
            but balances how often each node is a target.
    """

    def __init__(self, graph: Graph, campaign: AdCampaign, rng=None, stratified: bool = True):
        if graph.n < 1:
            raise ValidationError("cannot sample RR sets from an empty graph")
        self.graph = graph
        self.campaign = campaign
        self.n = graph.n
        self.stratified = stratified
        self.probs = graph.arc_probabilities(campaign)
        base = make_rng(rng)
        self._target_rng = make_rng(base, 0)
        self._coin_rng = make_rng(base, 1)
        self._pool = np.zeros(0)
        self._perm = np.zeros(0, dtype=np.int64)
        self._mark = np.zeros(self.n, dtype=np.int64)
        self._stamp = 0

        self.members = np.zeros(0, dtype=np.int32)
        self.offsets = np.zeros(1, dtype=np.int64)
        self.alive = np.zeros(0, dtype=bool)
        self.alive_cov = np.zeros(self.n, dtype=np.int64)
        self.idx_ptr = np.zeros(self.n + 1, dtype=np.int64)
        self.idx_sets = np.zeros(0, dtype=np.int64)

    @property
    def theta(self) -> int:
        return len(self.offsets) - 1

    def __len__(self):
        return self.theta

    def __repr__(self):
        return f"RRSample(ad={self.campaign.ad_id}, theta={self.theta}, alive={int(self.alive.sum())})"

    def rr_set(self, r: int) -> RRSet:
        m = self.members[self.offsets[r]:self.offsets[r + 1]]
        return RRSet(int(m[0]), frozenset(m.tolist()))

    def coverage(self, node: int) -> int:
        """Number of sets, alive or removed, that contain ``node``."""
        return int(self.idx_ptr[node + 1] - self.idx_ptr[node])

    def _draw_targets(self, count: int) -> np.ndarray:
        if not self.stratified:
            return self._target_rng.integers(self.n, size=count)
        out = []
        need = count
        while need > 0:
            if self._perm.size == 0:
                self._perm = self._target_rng.permutation(self.n)
            take = self._perm[:need]
            self._perm = self._perm[need:]
            out.append(take)
            need -= take.size
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def full_rounds(self, theta: int) -> int:
        """Smallest sample size >= theta that ends on a completed target round."""
        if not self.stratified:
            return theta
        return -(-theta // self.n) * self.n

    def _append_sets(self, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        count = targets.size
        g = self.graph
        sizes = np.empty(count, dtype=np.int64)
        parts = []
        buf = np.empty(max(1024, 4 * count), dtype=np.int32)
        chunk = _UNIFORM_CHUNK
        start = 0
        while start < count:
            if self._pool.size < chunk:
                self._pool = np.concatenate([self._pool, self._coin_rng.random(_UNIFORM_CHUNK)])
            k, used, mused, self._stamp = _kernels.rr_fill(
                g.in_ptr, g.in_arcs, g.sources, self.probs, targets, start,
                self._pool, buf, sizes[start:], self._mark, self._stamp,
            )
            self._pool = self._pool[used:]
            if k == start:
                # Neither buffer could hold one more set: enlarge both.
                chunk = self._pool.size + _UNIFORM_CHUNK
                if mused == 0 and buf.size < self.n:
                    buf = np.empty(max(buf.size * 2, self.n), dtype=np.int32)
                continue
            parts.append(buf[:mused].copy())
            start = k
        members = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int32)
        return members, sizes

    def extend(self, additional: int) -> "RRSample":
        """Sample ``additional`` new RR sets; they start alive."""
        additional = int(additional)
        if additional < 0:
            raise ValidationError("additional must be >= 0")
        if additional == 0:
            return self
        new_members, sizes = self._append_sets(self._draw_targets(additional))
        base = self.offsets[-1]
        new_offsets = base + np.cumsum(sizes)
        self.members = np.concatenate([self.members, new_members])
        self.offsets = np.concatenate([self.offsets, new_offsets])
        self.alive = np.concatenate([self.alive, np.ones(additional, dtype=bool)])
        self.alive_cov += np.bincount(new_members, minlength=self.n)
        self.idx_ptr, self.idx_sets = _kernels.build_index(self.n, self.offsets, self.members)
        return self

    def recount_alive_coverage(self) -> np.ndarray:
        """Alive coverage recomputed from scratch (consistency checks)."""
        sizes = np.diff(self.offsets)
        alive_entries = np.repeat(self.alive, sizes)
        return np.bincount(self.members[alive_entries], minlength=self.n).astype(np.int64)

    def copy(self) -> "RRSample":
        other = object.__new__(RRSample)
        other.__dict__.update(self.__dict__)
        other.alive = self.alive.copy()
        other.alive_cov = self.alive_cov.copy()
        return other

    # -- persistence ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        """``RRS1`` snapshot: magic, uint64 theta, then per set a varint
        length followed by varint members (little-endian varints)."""
        out = io.BytesIO()
        out.write(SNAPSHOT_MAGIC)
        out.write(struct.pack("<Q", self.theta))
        for r in range(self.theta):
            m = self.members[self.offsets[r]:self.offsets[r + 1]]
            _write_varint(out, len(m))
            for v in m.tolist():
                _write_varint(out, v)
        return out.getvalue()

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, graph: Graph, campaign: AdCampaign, rng=None) -> "RRSample":
        """Rebuild a sample from a snapshot; every set comes back alive."""
        if data[:4] != SNAPSHOT_MAGIC:
            raise ValidationError("not an RRS1 snapshot")
        (theta,) = struct.unpack_from("<Q", data, 4)
        pos = 12
        sizes = np.empty(theta, dtype=np.int64)
        members = []
        for r in range(theta):
            size, pos = _read_varint(data, pos)
            sizes[r] = size
            for _ in range(size):
                v, pos = _read_varint(data, pos)
                if v >= graph.n:
                    raise ValidationError(f"snapshot member {v} outside graph")
                members.append(v)
        return cls._from_flat(graph, campaign, np.asarray(members, dtype=np.int64), sizes, rng)

    @classmethod
    def from_sets(cls, graph: Graph, campaign: AdCampaign, sets, rng=None) -> "RRSample":
        """Sample holding the given node sets (target first if order matters), all alive."""
        sets = [list(dict.fromkeys(int(v) for v in st)) for st in sets]
        if any(not st for st in sets):
            raise ValidationError("RR sets cannot be empty")
        flat = np.fromiter((v for st in sets for v in st), dtype=np.int64)
        if flat.size and (flat.min() < 0 or flat.max() >= graph.n):
            raise ValidationError("set member outside graph")
        return cls._from_flat(graph, campaign, flat, np.array([len(st) for st in sets], dtype=np.int64), rng)

    @classmethod
    def _from_flat(cls, graph, campaign, members, sizes, rng):
        sample = cls(graph, campaign, rng=rng)
        sample.members = members.astype(np.int32)
        sample.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        sample.alive = np.ones(sizes.size, dtype=bool)
        sample.alive_cov = np.bincount(sample.members, minlength=graph.n).astype(np.int64)
        sample.idx_ptr, sample.idx_sets = _kernels.build_index(graph.n, sample.offsets, sample.members)
        return sample

    @classmethod
    def load(cls, path, graph: Graph, campaign: AdCampaign, rng=None) -> "RRSample":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), graph, campaign, rng)


def _write_varint(out, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.write(bytes((byte | 0x80,)))
        else:
            out.write(bytes((byte,)))
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    shift = 0
    value = 0
    while True:
        if pos >= len(data):
            raise ValidationError("truncated RRS1 snapshot")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def extend_sample(sample: RRSample, graph: Graph, campaign: AdCampaign, additional: int, rng=None) -> RRSample:
    """Append ``additional`` RR sets to ``sample`` (the sample's own streams are used)."""
    if graph is not sample.graph or campaign != sample.campaign:
        raise ValidationError("sample was drawn for a different graph or campaign")
    return sample.extend(additional)


def estimate_spread(sample: RRSample, seed_set) -> float:
    """``n * F_R(S)`` over every set ever sampled, alive or removed."""
    if sample.theta == 0:
        raise ValidationError("empty sample")
    seeds = [int(s) for s in seed_set]
    if not seeds:
        return 0.0
    hit = np.concatenate([sample.idx_sets[sample.idx_ptr[s]:sample.idx_ptr[s + 1]] for s in seeds])
    return sample.n * np.unique(hit).size / sample.theta


def remove_covered(sample: RRSample, node: int) -> int:
    """Flag every alive set containing ``node`` as removed; returns the count."""
    return int(_kernels.remove_sets_containing(
        int(node), sample.idx_ptr, sample.idx_sets, sample.alive, sample.offsets, sample.members, sample.alive_cov
    ))


def _eligible(sample: RRSample, excluded) -> np.ndarray:
    cov = sample.alive_cov
    ok = cov > 0
    if excluded is not None:
        ok &= ~np.asarray(excluded, dtype=bool)
    return ok


def select_best_ca_node(sample: RRSample, excluded=None):
    """Unexcluded node with the largest alive coverage (lowest id on ties).

    Returns ``(node, coverage)`` or None when no eligible node covers a set.
    """
    ok = _eligible(sample, excluded)
    if not ok.any():
        return None
    cov = np.where(ok, sample.alive_cov, -1)
    v = int(np.argmax(cov))
    return v, int(cov[v])


def _best_ratio(cov: np.ndarray, cost: np.ndarray, nodes: np.ndarray):
    """Argmax of cov/cost over ``nodes`` (sorted ids, all with cov > 0).

    Zero cost counts as an infinite ratio; ties go to larger coverage,
    then to the lowest id.
    """
    if nodes.size == 0:
        return None
    c = cov[nodes].astype(np.float64)
    k = cost[nodes]
    with np.errstate(divide="ignore"):
        ratio = np.where(k > 0, c / np.where(k > 0, k, 1.0), np.inf)
    best = ratio.max()
    tied = np.flatnonzero(ratio == best)
    tc = c[tied]
    pick = tied[np.flatnonzero(tc == tc.max())[0]]
    v = int(nodes[pick])
    return v, int(cov[v])


def select_best_cs_node(sample: RRSample, costs, excluded=None):
    """Unexcluded node with the largest alive-coverage-to-cost ratio."""
    costs = np.asarray(costs, dtype=np.float64)
    return _best_ratio(sample.alive_cov, costs, np.flatnonzero(_eligible(sample, excluded)))


def coverage_window(sample: RRSample, w: int, excluded=None) -> np.ndarray:
    """The ``w`` eligible nodes of highest alive coverage, ties to lower ids."""
    nodes = np.flatnonzero(_eligible(sample, excluded))
    if w >= nodes.size:
        return nodes
    cov = sample.alive_cov[nodes]
    kth = np.partition(cov, nodes.size - w)[nodes.size - w]
    above = nodes[cov > kth]
    at = nodes[cov == kth][: w - above.size]
    return np.sort(np.concatenate([above, at]))


def windowed_select_best_cs_node(sample: RRSample, costs, excluded=None, w: int | None = None):
    """Cost-sensitive choice restricted to the top-``w`` coverage window."""
    if w is None:
        return select_best_cs_node(sample, costs, excluded)
    if w < 1:
        raise ValidationError("window size must be >= 1")
    costs = np.asarray(costs, dtype=np.float64)
    return _best_ratio(sample.alive_cov, costs, coverage_window(sample, w, excluded))


def update_estimates(sample: RRSample, ledger: SeedLedger, campaign: AdCampaign) -> float:
    """Credit existing seeds with newly sampled sets they cover; returns pi_i(S_i).

    Seeds are processed in selection order and each newly covered set is
    removed, so a set is credited to the first seed that covers it.
    """
    for entry in ledger.entries:
        entry[1] += remove_covered(sample, entry[0])
    if sample.theta == 0:
        return 0.0
    return campaign.cpe * sample.n * ledger.total_coverage / sample.theta


class PilotBound:
    """Lower bound on OPT_s from a greedy seed set on a small pilot sample.

    ``LB = max(s, (1 - eps) * n * F_pilot(greedy_s))``.
    """

    def __init__(self, graph: Graph, campaign: AdCampaign, rng=None, size: int = PILOT_SIZE):
        self.sample = RRSample(graph, campaign, rng=rng).extend(size)
        self._picks: list[int] = []
        self._covered = [0]

    def greedy_fraction(self, s: int) -> float:
        smp = self.sample
        while len(self._picks) < s:
            best = select_best_ca_node(smp)
            if best is None:
                # Every set is covered; more seeds add nothing.
                self._picks.append(-1)
                self._covered.append(self._covered[-1])
                continue
            v, _ = best
            got = remove_covered(smp, v)
            self._picks.append(v)
            self._covered.append(self._covered[-1] + got)
        return self._covered[s] / smp.theta

    def lower_bound(self, s: int, epsilon: float) -> float:
        return max(float(s), (1 - epsilon) * self.sample.n * self.greedy_fraction(s))
