# detection/families.py
"""
Candidate anomalous-set families.

Members are returned as sorted 0-based numpy index arrays. Every family knows
its size N, can sample a member uniformly, enumerate its members (up to the
enumeration cap) and describe the overlap Z = |S ∩ S'| of two independent
uniform members, exactly where a closed form exists and by simulation always.
"""
import itertools
import logging
import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.special import logsumexp

from .conf import setting
from .exceptions import ConfigurationError, EnumerationCapExceeded, UnsupportedModeError
from .streams import get_rng

logger = logging.getLogger(__name__)


class FamilyKind(str, Enum):
    INTERVALS = "intervals"
    KSETS = "ksets"
    HYPERCUBES = "hypercubes"
    MATCHINGS = "matchings"
    TREES = "trees"
    EXPLICIT = "explicit"


class OverlapMode(str, Enum):
    EXACT = "exact"
    COROLLARY_BOUND = "bound"
    MONTE_CARLO = "montecarlo"


@dataclass(frozen=True)
class OverlapDistribution:
    pmf: dict
    mode: OverlapMode
    trials: int | None = None
    seed: int | None = None

    @property
    def mean(self) -> float:
        return sum(ell * p for ell, p in self.pmf.items())

    def log_mgf(self, nu: float) -> float:
        ells = np.array(list(self.pmf), dtype=np.float64)
        probs = np.array(list(self.pmf.values()), dtype=np.float64)
        return float(logsumexp(nu * ells, b=probs))


def _log_one_plus_exp(log_x: float) -> float:
    """log(1 + exp(log_x)) without overflow."""
    return float(np.logaddexp(0.0, log_x))


def _as_float_pmf(pmf) -> dict:
    return {int(ell): float(p) for ell, p in sorted(pmf.items()) if p}


class SetFamily(ABC):
    kind: FamilyKind

    def __init__(self, n: int, k: int):
        if n < 1 or k < 1 or k > n:
            raise ConfigurationError(f"Need 1 <= k <= n, got n={n}, k={k}", n=n, k=k)
        self.n = int(n)
        self.k = int(k)
        self._members = None

    # === Size ===
    @abstractmethod
    def size(self) -> int:
        """Exact family cardinality N (arbitrary precision)."""

    def log_size(self) -> float:
        return math.log(self.size())

    # === Members ===
    @abstractmethod
    def sample_member(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def _iter_members(self):
        ...

    def _check_cap(self, cap=None):
        cap = setting("ENUMERATION_CAP") if cap is None else cap
        size = self.size()
        if size > cap:
            raise EnumerationCapExceeded(size, cap)

    def enumerate_members(self, cap=None):
        self._check_cap(cap)
        return self._iter_members()

    def members_array(self, cap=None) -> np.ndarray:
        """All members as an (N, k) integer array, built once."""
        self._check_cap(cap)
        if self._members is None:
            members = np.array(list(self._iter_members()), dtype=np.int64).reshape(-1, self.k)
            members.setflags(write=False)
            self._members = members
        return self._members

    def contains(self, S) -> bool:
        S = np.sort(np.asarray(S, dtype=np.int64).ravel())
        if S.size != self.k:
            return False
        return any(np.array_equal(S, member) for member in self.enumerate_members())

    def is_enumerable(self, cap=None) -> bool:
        cap = setting("ENUMERATION_CAP") if cap is None else cap
        return self.size() <= cap

    # === Overlap law ===
    def exact_overlap_pmf(self) -> dict:
        raise UnsupportedModeError(
            f"No exact overlap law for {self.kind.value}; use mode 'montecarlo'",
            family=self.kind.value,
        )

    def corollary_log_mgf(self, nu: float) -> float:
        raise UnsupportedModeError(f"No closed-form overlap bound for {self.kind.value}", family=self.kind.value)

    def enumerated_overlap_pmf(self, cap=None) -> dict:
        """Overlap law by brute force over all ordered member pairs, as exact fractions."""
        members = self.members_array(cap)
        size = members.shape[0]
        incidence = np.zeros((size, self.n), dtype=np.float64)
        np.put_along_axis(incidence, members, 1.0, axis=1)
        counts = np.zeros(self.k + 1, dtype=np.int64)
        chunk = max(1, 2_000_000 // max(size, 1))
        for start in range(0, size, chunk):
            overlaps = np.rint(incidence[start:start + chunk] @ incidence.T).astype(np.int64)
            counts += np.bincount(overlaps.ravel(), minlength=self.k + 1)
        total = size * size
        return {ell: Fraction(int(c), total) for ell, c in enumerate(counts) if c}

    def monte_carlo_overlaps(self, pairs: int, rng: np.random.Generator) -> np.ndarray:
        overlaps = np.empty(pairs, dtype=np.int64)
        for i in range(pairs):
            first = self.sample_member(rng)
            second = self.sample_member(rng)
            overlaps[i] = np.intersect1d(first, second, assume_unique=True).size
        return overlaps

    def overlap_pmf(self, mode=OverlapMode.EXACT, pairs=None, seed=None) -> OverlapDistribution:
        mode = OverlapMode(mode)
        if mode is OverlapMode.EXACT:
            return OverlapDistribution(_as_float_pmf(self.exact_overlap_pmf()), mode)
        if mode is OverlapMode.MONTE_CARLO:
            pairs = setting("OVERLAP_PAIRS") if pairs is None else int(pairs)
            seed = setting("DEFAULT_SEED") if seed is None else seed
            overlaps = self.monte_carlo_overlaps(pairs, get_rng(seed))
            counts = np.bincount(overlaps, minlength=self.k + 1)
            pmf = {ell: c / pairs for ell, c in enumerate(counts) if c}
            return OverlapDistribution(pmf, mode, trials=pairs, seed=seed)
        raise UnsupportedModeError("The corollary bound is an MGF bound, not an overlap law")

    def overlap_log_mgf(self, nu: float, mode=OverlapMode.EXACT, pairs=None, seed=None) -> float:
        """log E exp(nu Z)."""
        if nu < 0:
            raise ConfigurationError(f"nu must be nonnegative, got {nu}")
        mode = OverlapMode(mode)
        if nu == 0:
            return 0.0
        if mode is OverlapMode.COROLLARY_BOUND:
            return self.corollary_log_mgf(nu)
        return self.overlap_pmf(mode, pairs=pairs, seed=seed).log_mgf(nu)

    def overlap_mgf(self, nu: float, mode=OverlapMode.EXACT, pairs=None, seed=None) -> float:
        log_value = self.overlap_log_mgf(nu, mode, pairs=pairs, seed=seed)
        return math.exp(log_value) if log_value < 709.0 else math.inf

    # === Description ===
    def describe(self) -> dict:
        return {"kind": self.kind.value, "n": self.n, "k": self.k}

    @property
    def label(self) -> str:
        return self.kind.value

    def __repr__(self):
        params = ", ".join(f"{key}={value}" for key, value in self.describe().items() if key != "kind")
        return f"{type(self).__name__}({params})"


class CircularIntervals(SetFamily):
    """Intervals {i, ..., i + k - 1} modulo n; the non-circular variant drops wrapping windows."""

    kind = FamilyKind.INTERVALS

    def __init__(self, n, k, circular=True):
        super().__init__(n, k)
        self.circular = bool(circular)

    def size(self) -> int:
        return self.n if self.circular else self.n - self.k + 1

    def member(self, start: int) -> np.ndarray:
        return np.sort((start + np.arange(self.k)) % self.n)

    def sample_member(self, rng):
        return self.member(int(rng.integers(self.size())))

    def _iter_members(self):
        return (self.member(start) for start in range(self.size()))

    def contains(self, S) -> bool:
        S = np.sort(np.asarray(S, dtype=np.int64).ravel())
        if S.size != self.k:
            return False
        return any(np.array_equal(S, self.member(int(start))) for start in S if start < self.size())

    def exact_overlap_pmf(self) -> dict:
        n, k = self.n, self.k
        counts = Counter()
        if self.circular:
            for d in range(n):
                overlap = k if d == 0 else max(0, k - d) + max(0, d + k - n)
                counts[overlap] += 1
            total = n
        else:
            size = self.size()
            for d in range(size):
                pairs = size if d == 0 else 2 * (size - d)
                counts[max(0, k - d)] += pairs
            total = size * size
        return {ell: Fraction(c, total) for ell, c in sorted(counts.items())}

    def stated_overlap_log_mgf(self, nu: float) -> float:
        """log(1 + (2/N) sum_{l=1..k} (e^{nu l} - 1)): the overlap law with mass 2/N on every l >= 1."""
        ells = np.arange(1, self.k + 1, dtype=np.float64)
        excess = np.expm1(nu * ells).sum() * 2.0 / self.size()
        return float(np.log1p(excess))

    def corollary_log_mgf(self, nu: float) -> float:
        # 1 + (2k/N) e^{nu k}
        return _log_one_plus_exp(math.log(2.0 * self.k / self.size()) + nu * self.k)

    def describe(self):
        out = super().describe()
        if not self.circular:
            out["circular"] = False
        return out


class KSets(SetFamily):
    kind = FamilyKind.KSETS

    def size(self) -> int:
        return math.comb(self.n, self.k)

    def log_size(self) -> float:
        return math.lgamma(self.n + 1) - math.lgamma(self.k + 1) - math.lgamma(self.n - self.k + 1)

    def sample_member(self, rng):
        return np.sort(rng.choice(self.n, size=self.k, replace=False, shuffle=False))

    def _iter_members(self):
        return (np.array(c, dtype=np.int64) for c in itertools.combinations(range(self.n), self.k))

    def contains(self, S) -> bool:
        S = np.asarray(S, dtype=np.int64).ravel()
        return S.size == self.k and np.unique(S).size == self.k and S.min() >= 0 and S.max() < self.n

    def exact_overlap_pmf(self) -> dict:
        # hypergeometric
        n, k = self.n, self.k
        total = math.comb(n, k)
        pmf = {}
        for ell in range(0, k + 1):
            ways = math.comb(k, ell) * math.comb(n - k, k - ell)
            if ways:
                pmf[ell] = Fraction(ways, total)
        return pmf

    def corollary_log_mgf(self, nu: float) -> float:
        # ((e^nu - 1) k / n + 1)^k
        return self.k * math.log1p(math.expm1(nu) * self.k / self.n) if nu < 700 else math.inf


class Hypercubes(SetFamily):
    """Products of circular intervals on the torus {0..m-1}^d with side lengths k_1..k_d."""

    kind = FamilyKind.HYPERCUBES

    def __init__(self, m, sides):
        self.m = int(m)
        self.sides = tuple(int(s) for s in sides)
        if not self.sides or any(s < 1 or s > self.m for s in self.sides):
            raise ConfigurationError(f"Side lengths must lie in [1, m={self.m}], got {self.sides}")
        self.d = len(self.sides)
        super().__init__(self.m ** self.d, math.prod(self.sides))
        self.shape = (self.m,) * self.d

    def size(self) -> int:
        return self.m ** self.d

    def member(self, corner) -> np.ndarray:
        axes = [(c + np.arange(s)) % self.m for c, s in zip(corner, self.sides)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.sort(np.ravel_multi_index([g.ravel() for g in grid], self.shape))

    def sample_member(self, rng):
        return self.member(rng.integers(self.m, size=self.d))

    def _iter_members(self):
        return (self.member(corner) for corner in itertools.product(range(self.m), repeat=self.d))

    def exact_overlap_pmf(self) -> dict:
        # the overlap of two boxes is the product of the per-axis overlaps
        pmf = {1: Fraction(1)}
        for side in self.sides:
            axis = CircularIntervals(self.m, side).exact_overlap_pmf()
            combined = Counter()
            for a, pa in pmf.items():
                for b, pb in axis.items():
                    combined[a * b] += pa * pb
            pmf = dict(combined)
        return dict(sorted(pmf.items()))

    def corollary_log_mgf(self, nu: float) -> float:
        # 1 + P(Z >= 1) e^{nu k} with P(Z_s >= 1) <= min(1, 2 k_s / m) on every axis
        log_hit = sum(math.log(min(1.0, 2.0 * s / self.m)) for s in self.sides)
        return _log_one_plus_exp(log_hit + nu * self.k)

    def describe(self):
        return {"kind": self.kind.value, "m": self.m, "sides": list(self.sides), "n": self.n, "k": self.k}


class PerfectMatchings(SetFamily):
    """Perfect matchings of the complete bipartite graph K_{k,k}; edge (i, j) has index i k + j."""

    kind = FamilyKind.MATCHINGS

    def __init__(self, k):
        super().__init__(int(k) ** 2, int(k))

    def size(self) -> int:
        return math.factorial(self.k)

    def log_size(self) -> float:
        return math.lgamma(self.k + 1)

    def member(self, permutation) -> np.ndarray:
        return np.arange(self.k) * self.k + np.asarray(permutation, dtype=np.int64)

    def sample_member(self, rng):
        return self.member(rng.permutation(self.k))

    def _iter_members(self):
        return (self.member(p) for p in itertools.permutations(range(self.k)))

    def contains(self, S) -> bool:
        S = np.asarray(S, dtype=np.int64).ravel()
        if S.size != self.k or S.min() < 0 or S.max() >= self.n:
            return False
        rows, cols = np.divmod(S, self.k)
        return np.unique(rows).size == self.k and np.unique(cols).size == self.k

    def corollary_log_mgf(self, nu: float) -> float:
        # exp(e^nu - 1): the overlap is the fixed-point count of a uniform permutation
        return math.expm1(nu) if nu < 700 else math.inf


def prufer_to_edges(sequence, num_vertices: int) -> list:
    """Edges (u < v) of the labelled tree on num_vertices vertices with this Prüfer sequence."""
    sequence = [int(v) for v in sequence]
    if len(sequence) != num_vertices - 2:
        raise ConfigurationError(
            f"A Prüfer sequence for {num_vertices} vertices has length {num_vertices - 2}, got {len(sequence)}"
        )
    tree = nx.from_prufer_sequence(sequence)
    return sorted((min(u, v), max(u, v)) for u, v in tree.edges())


class SpanningTrees(SetFamily):
    """Spanning trees of K_{k+1}; coordinates are the n = k(k+1)/2 edges in lexicographic order."""

    kind = FamilyKind.TREES

    def __init__(self, k):
        k = int(k)
        self.vertices = k + 1
        super().__init__(k * (k + 1) // 2, k)

    def edge_index(self, u: int, v: int) -> int:
        if u > v:
            u, v = v, u
        return u * (2 * self.vertices - u - 1) // 2 + (v - u - 1)

    def edge_of(self, index: int) -> tuple:
        u = 0
        while index >= self.vertices - u - 1:
            index -= self.vertices - u - 1
            u += 1
        return u, u + 1 + index

    def member_from_prufer(self, sequence) -> np.ndarray:
        edges = prufer_to_edges(list(sequence), self.vertices)
        return np.sort(np.array([self.edge_index(u, v) for u, v in edges], dtype=np.int64))

    def size(self) -> int:
        # Cayley
        return self.vertices ** (self.vertices - 2)

    def log_size(self) -> float:
        return (self.vertices - 2) * math.log(self.vertices)

    def sample_member(self, rng):
        return self.member_from_prufer(rng.integers(self.vertices, size=self.vertices - 2).tolist())

    def _iter_members(self):
        return (
            self.member_from_prufer(seq)
            for seq in itertools.product(range(self.vertices), repeat=self.vertices - 2)
        )

    def contains(self, S) -> bool:
        S = np.asarray(S, dtype=np.int64).ravel()
        if S.size != self.k or np.unique(S).size != self.k or S.min() < 0 or S.max() >= self.n:
            return False
        graph = nx.Graph()
        graph.add_nodes_from(range(self.vertices))
        graph.add_edges_from(self.edge_of(int(index)) for index in S)
        return nx.is_tree(graph)

    def corollary_log_mgf(self, nu: float) -> float:
        # ((e^nu - 1) 2 / (k + 1) + 1)^k; tree edges are negatively associated
        return self.k * math.log1p(math.expm1(nu) * 2.0 / (self.k + 1)) if nu < 700 else math.inf


class ExplicitFamily(SetFamily):
    kind = FamilyKind.EXPLICIT

    def __init__(self, members, n=None):
        members = [np.sort(np.asarray(m, dtype=np.int64).ravel()) for m in members]
        if not members:
            raise ConfigurationError("Explicit family needs at least one member")
        k = members[0].size
        if any(m.size != k for m in members):
            raise ConfigurationError("Explicit family members must all have the same size")
        if any(np.unique(m).size != k for m in members):
            raise ConfigurationError("Explicit family member contains repeated indices")
        seen = set()
        for m in members:
            key = tuple(m.tolist())
            if key in seen:
                raise ConfigurationError(f"Explicit family has a duplicate member {[i + 1 for i in key]}")
            seen.add(key)
        lowest = min(int(m.min()) for m in members)
        highest = max(int(m.max()) for m in members)
        n = highest + 1 if n is None else int(n)
        if lowest < 0 or highest >= n:
            raise ConfigurationError(f"Explicit family indices out of range for n={n}")
        super().__init__(n, k)
        self.members = members

    @classmethod
    def from_lines(cls, lines, n=None):
        """Parse the text format: one member per line, space-separated 1-based indices."""
        members = []
        for lineno, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                members.append([int(token) - 1 for token in line.split()])
            except ValueError as exc:
                raise ConfigurationError(f"Line {lineno}: indices must be integers") from exc
        return cls(members, n=n)

    @classmethod
    def disjoint(cls, count: int, k: int, n=None):
        return cls([np.arange(i * k, (i + 1) * k) for i in range(count)], n=n)

    def size(self) -> int:
        return len(self.members)

    def sample_member(self, rng):
        return self.members[int(rng.integers(len(self.members)))]

    def _iter_members(self):
        return iter(self.members)

    @property
    def is_disjoint(self) -> bool:
        return np.unique(np.concatenate(self.members)).size == self.k * len(self.members)

    def exact_overlap_pmf(self) -> dict:
        if self.is_disjoint:
            size = len(self.members)
            pmf = {0: Fraction(size - 1, size), self.k: Fraction(1, size)}
            return {ell: p for ell, p in pmf.items() if p}
        return self.enumerated_overlap_pmf()

    def corollary_log_mgf(self, nu: float) -> float:
        if not self.is_disjoint:
            raise UnsupportedModeError("The closed-form overlap bound applies to disjoint explicit families only")
        # 1 + e^{nu k} / N
        return _log_one_plus_exp(nu * self.k - math.log(len(self.members)))

    def describe(self):
        out = super().describe()
        out["members"] = [[int(i) + 1 for i in m] for m in self.members]
        return out


def load_explicit_family(path, n=None) -> ExplicitFamily:
    with Path(path).open(encoding="utf-8") as handle:
        return ExplicitFamily.from_lines(handle, n=n)


def build_family(kind, n=None, k=None, m=None, sides=None, members=None, path=None, circular=True) -> SetFamily:
    """Family from plain parameters (as validated from JSON configs or CLI flags)."""
    kind = FamilyKind(kind)
    if kind is FamilyKind.INTERVALS:
        return CircularIntervals(n, k, circular=circular)
    if kind is FamilyKind.KSETS:
        return KSets(n, k)
    if kind is FamilyKind.HYPERCUBES:
        if m is None or not sides:
            raise ConfigurationError("Hypercubes need m and sides")
        family = Hypercubes(m, sides)
    elif kind is FamilyKind.MATCHINGS:
        family = PerfectMatchings(k)
    elif kind is FamilyKind.TREES:
        family = SpanningTrees(k)
    else:
        if path is not None:
            family = load_explicit_family(path, n=n)
        elif members is not None:
            family = ExplicitFamily([[int(i) - 1 for i in member] for member in members], n=n)
        else:
            raise ConfigurationError("Explicit families need members or a path")
    if n is not None and family.n != int(n):
        raise ConfigurationError(f"{kind.value} family has n={family.n}, but n={n} was requested", n=n)
    if k is not None and family.k != int(k):
        raise ConfigurationError(f"{kind.value} family has k={family.k}, but k={k} was requested", k=k)
    return family
