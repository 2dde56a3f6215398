"""Graphical representation, forward reconstruction and coalescing duals.

The voter part of the construction draws, for every directed site pair
(x, y = x + offset), a Poisson(1/k) stream of arrows y -> x on [0, T]; at an
arrow the voter at x copies the opinion at y.  The same materialized event
list is traversed upward to build forward states and downward to run the
dual, so pathwise identities can be tested on the identical randomness.

With epsilon > 0, each site additionally carries a Poisson(epsilon) stream
of branching events with stored uniform marks.  At a branching event at x
the current opinion i flips to 1-i when the mark is below g(f) = f**q, f the
fraction of disagreeing neighbors (the thinning slows the capped rate down
to the configuration-dependent one).  The represented flip rate is then
f + epsilon * f**q, a nonnegative-perturbation model used to exercise the
branching dual and the influence-set machinery; the signed clustering-regime
tables are simulated directly by the dynamics module instead.

The dual of a site set moves walkers downward: a walker at x jumps to the
arrow's source when it meets a voter arrow, so a single walker is a rate-1
random walk uniform over the neighborhood; walkers meeting at a site
coalesce permanently.  A walker at a branching event spawns walkers on the
whole neighborhood (the influence set): the values of the initial
configuration on the dual's final positions determine the forward state on
the query set exactly, which `reconstruct_forward` implements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import as_rng, kernel_state
from .lattice import Configuration, TorusLattice

__all__ = [
    "GraphicalRep",
    "DualState",
    "build_graphical_rep",
    "forward_state",
    "dual_crw",
    "reconstruct_forward",
    "check_duality",
    "DualityEstimate",
    "gadget_flip_rates",
    "GadgetTable",
]


@dataclass(frozen=True)
class GraphicalRep:
    """Materialized voter and branching event streams on [0, T]."""

    lattice: TorusLattice
    T: float
    epsilon: float
    voter_times: np.ndarray
    voter_target: np.ndarray
    voter_source: np.ndarray
    branch_times: np.ndarray
    branch_site: np.ndarray
    branch_mark: np.ndarray

    @property
    def n_voter_events(self) -> int:
        return len(self.voter_times)

    @property
    def n_branch_events(self) -> int:
        return len(self.branch_times)

    def events_chronological(self):
        """Yield ('v', t, target, source) and ('b', t, site, mark) in time order."""
        i = j = 0
        nv, nb = len(self.voter_times), len(self.branch_times)
        while i < nv or j < nb:
            if j >= nb or (i < nv and self.voter_times[i] <= self.branch_times[j]):
                yield ("v", self.voter_times[i], int(self.voter_target[i]),
                       int(self.voter_source[i]))
                i += 1
            else:
                yield ("b", self.branch_times[j], int(self.branch_site[j]),
                       float(self.branch_mark[j]))
                j += 1


def build_graphical_rep(lattice: TorusLattice, T: float, epsilon: float,
                        rng) -> GraphicalRep:
    """Sample all event streams on [0, T].

    Voter arrows arrive at rate 1/k per directed pair (n*T in total);
    branching events at rate epsilon per site, each with a uniform mark.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    rng = as_rng(rng)
    n, k = lattice.n, lattice.k
    nv = rng.poisson(n * T)
    vt = np.sort(rng.random(nv)) * T
    pair = rng.integers(0, n * k, size=nv)
    target = (pair // k).astype(np.int64)
    source = lattice.nbr_out[target, pair % k].astype(np.int64)
    if epsilon > 0:
        nb = rng.poisson(n * epsilon * T)
        bt = np.sort(rng.random(nb)) * T
        bsite = rng.integers(0, n, size=nb).astype(np.int64)
        bmark = rng.random(nb)
    else:
        bt = np.empty(0)
        bsite = np.empty(0, dtype=np.int64)
        bmark = np.empty(0)
    return GraphicalRep(lattice=lattice, T=float(T), epsilon=float(epsilon),
                        voter_times=vt, voter_target=target, voter_source=source,
                        branch_times=bt, branch_site=bsite, branch_mark=bmark)


def forward_state(rep: GraphicalRep, xi0: Configuration,
                  q: float | None = None) -> Configuration:
    """Apply the representation's events upward from xi0 at time 0.

    ``q`` sets the branching acceptance g(f) = f**q and is required whenever
    the representation carries branching events.
    """
    if xi0.lattice is not rep.lattice:
        raise ValueError("configuration and representation use different lattices")
    if rep.n_branch_events and q is None:
        raise ValueError("q is required to replay branching events")
    xi = xi0.copy()
    bits = xi.bits
    nbr = rep.lattice.nbr_out
    k = rep.lattice.k
    for ev in rep.events_chronological():
        if ev[0] == "v":
            _, _, x, y = ev
            old = bits[x]
            new = bits[y]
            if new != old:
                bits[x] = new
                xi.ones_count += int(new) - int(old)
        else:
            _, _, x, u = ev
            i = bits[x]
            m = 0
            for j in range(k):
                if bits[nbr[x, j]] != i:
                    m += 1
            f = m / k
            if u < f**q:
                bits[x] = 1 - i
                xi.ones_count += 1 - 2 * int(i)
    return xi


@dataclass
class DualState:
    """Coalescing (optionally branching) dual walkers run downward.

    Walkers are numbered in creation order; the first ``len(query_sites)``
    start on the query set at dual time 0.  The union-find ``parent`` records
    coalescences; all walkers in a block share the block root's position.
    ``log`` keeps the traversed events for forward reconstruction.
    """

    query_sites: list
    clock: float
    parent: list
    walker_pos: dict          # root id -> current site
    walker_start: list        # walker id -> site where it was created
    log: list = field(default_factory=list)

    def find(self, w: int) -> int:
        p = self.parent
        while p[w] != w:
            p[w] = p[p[w]]
            w = p[w]
        return w

    def position_of(self, query_site: int) -> int:
        w = self.query_sites.index(query_site)
        return self.walker_pos[self.find(w)]

    @property
    def walkers(self) -> dict:
        """Map original query site -> current position."""
        return {s: self.position_of(s) for s in self.query_sites}

    def partition_blocks(self):
        """Blocks of query sites whose walkers have coalesced."""
        blocks = {}
        for i, s in enumerate(self.query_sites):
            blocks.setdefault(self.find(i), []).append(s)
        return sorted(sorted(b) for b in blocks.values())

    def influence_set(self) -> set:
        return set(self.walker_pos.values())

    @property
    def n_walkers(self) -> int:
        return len(self.walker_pos)


def dual_crw(rep: GraphicalRep, B, s_max: float | None = None) -> DualState:
    """Run the dual downward from time T for dual time s_max (default T).

    Voter arrows move a walker from the arrow's target to its source,
    coalescing on collisions; branching events spawn walkers on the whole
    neighborhood of an occupied site (occupied targets coalesce immediately).
    """
    B = sorted(set(int(b) for b in B))
    if not B:
        raise ValueError("B must be nonempty")
    if s_max is None:
        s_max = rep.T
    if s_max > rep.T:
        raise ValueError("s_max cannot exceed the representation horizon")
    lat = rep.lattice
    state = DualState(
        query_sites=B,
        clock=float(s_max),
        parent=list(range(len(B))),
        walker_pos={},
        walker_start=list(B),
    )
    occupied: dict[int, int] = {}
    for w, s in enumerate(B):
        if s in occupied:
            state.parent[w] = occupied[s]
        else:
            occupied[s] = w
            state.walker_pos[w] = s
    t_stop = rep.T - s_max
    events = list(rep.events_chronological())
    for ev in reversed(events):
        t = ev[1]
        if t > rep.T:
            continue
        if t < t_stop:
            break
        if ev[0] == "v":
            _, _, x, y = ev
            r = occupied.get(x)
            if r is None:
                continue
            state.log.append(ev)
            del occupied[x]
            del state.walker_pos[r]
            r2 = occupied.get(y)
            if r2 is None:
                occupied[y] = r
                state.walker_pos[r] = y
            else:
                state.parent[state.find(r)] = state.find(r2)
        else:
            _, _, x, u = ev
            r = occupied.get(x)
            if r is None:
                continue
            nbs = tuple(int(v) for v in lat.nbr_out[x])
            state.log.append(("b", t, x, u, nbs))
            for nb in nbs:
                if nb not in occupied:
                    w = len(state.parent)
                    state.parent.append(w)
                    state.walker_start.append(nb)
                    occupied[nb] = w
                    state.walker_pos[w] = nb
    return state


def reconstruct_forward(dual: DualState, values: dict, q: float | None = None) -> dict:
    """Compute the forward state on the query set from the dual alone.

    ``values`` maps every site of the dual's influence set to its opinion at
    time T - s (s the dual clock).  The recorded events are replayed upward;
    the result maps each query site to its opinion at time T.
    """
    val = dict(values)
    missing = dual.influence_set() - set(val)
    if missing:
        raise ValueError(f"values missing for influence sites {sorted(missing)}")
    for ev in reversed(dual.log):
        if ev[0] == "v":
            _, _, x, y = ev
            val[x] = val[y]
        else:
            _, _, x, u, nbs = ev
            if q is None:
                raise ValueError("q is required to replay branching events")
            i = val[x]
            m = sum(1 for nb in nbs if val[nb] != i)
            f = m / len(nbs)
            if u < f**q:
                val[x] = 1 - i
    return {s: val[s] for s in dual.query_sites}


@dataclass
class DualityEstimate:
    p_forward: float
    se_forward: float
    p_dual: float
    se_dual: float

    @property
    def gap(self) -> float:
        return abs(self.p_forward - self.p_dual)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se_forward, self.se_dual)


def check_duality(lattice: TorusLattice, A, B, t: float, replicates: int,
                  rng) -> DualityEstimate:
    """Monte Carlo for both sides of the hitting identity

        P( voter from 1_A has a 1 on B at time t )
          = P( coalescing walks from B at dual time t meet A ),

    estimated independently (pure voter only)."""
    A = sorted(set(int(a) for a in A))
    B = sorted(set(int(b) for b in B))
    if not A or not B:
        raise ValueError("A and B must be nonempty")
    if t < 0:
        raise ValueError("t must be >= 0")
    rng = as_rng(rng)
    n, k = lattice.n, lattice.k
    bits0 = np.zeros(n, dtype=np.uint8)
    bits0[A] = 1
    b_mask = np.zeros(n, dtype=np.uint8)
    b_mask[B] = 1
    a_mask = np.zeros(n, dtype=np.uint8)
    a_mask[A] = 1
    if t == 0:
        p = 1.0 if set(A) & set(B) else 0.0
        return DualityEstimate(p, 0.0, p, 0.0)
    voter_tab = np.arange(k + 1, dtype=np.float64) / k
    bits = np.empty(n, dtype=np.uint8)
    disc = np.empty(n, dtype=np.int8)
    active = np.empty(n, dtype=np.int32)
    apos = np.empty(n, dtype=np.int32)
    s = kernel_state(rng)
    hits_f, *_ = _kernels.voter_hits(s[0], s[1], s[2], s[3], bits0,
                                     lattice.nbr_out, lattice.nbr_in, b_mask,
                                     float(t), replicates, voter_tab,
                                     bits, disc, active, apos)
    occ = np.empty(n, dtype=np.int64)
    s = kernel_state(rng)
    hits_d, *_ = _kernels.crw_hits(s[0], s[1], s[2], s[3],
                                   np.asarray(B, dtype=np.int64),
                                   lattice.nbr_out, a_mask, float(t),
                                   replicates, occ)
    pf = hits_f / replicates
    pd = hits_d / replicates
    return DualityEstimate(
        p_forward=pf,
        se_forward=math.sqrt(pf * (1 - pf) / replicates),
        p_dual=pd,
        se_dual=math.sqrt(pd * (1 - pd) / replicates),
    )


@dataclass(frozen=True)
class GadgetTable:
    """Flip rates of every arrow-and-kill gadget model on a 4-neighborhood.

    ``rows[m] = (rate 1->0, rate 0->1)`` for m = 0..4 disagreeing neighbors.
    ``asymmetric`` is True when some m in {1,2,3} flips 0->1 strictly faster
    than 1->0, which happens exactly when a2 + a3 + a4 > 0: the construction
    cannot realize a nonlinear rate that depends on m alone.
    """

    a: tuple
    rows: tuple

    @property
    def asymmetric(self) -> bool:
        return any(self.rows[m][0] < self.rows[m][1] for m in (1, 2, 3))


def gadget_flip_rates(a) -> GadgetTable:
    """Rate table of the gadget construction with rates a[j] for the gadget
    carrying j arrows, on a neighborhood of size 4.

    A gadget kills the opinion at x and redraws it from the arrowed
    neighbors: a 1 at x stays 0 only if all arrowed neighbors are 0, while a
    0 at x becomes 1 if any arrowed neighbor is 1.  Counting subsets gives

        rate(1->0)(m) = sum_j C(m, j) a_j
        rate(0->1)(m) = sum_j [C(4, j) - C(4 - m, j)] a_j
    """
    a = tuple(a)
    if len(a) != 4:
        raise ValueError("need four gadget rates a1..a4")
    if any(v < 0 for v in a):
        raise ValueError("gadget rates must be nonnegative")
    k = 4
    rows = []
    for m in range(k + 1):
        r10 = sum(math.comb(m, j) * a[j - 1] for j in range(1, k + 1))
        r01 = sum((math.comb(k, j) - math.comb(k - m, j)) * a[j - 1]
                  for j in range(1, k + 1))
        rows.append((r10, r01))
    return GadgetTable(a=a, rows=tuple(rows))
