"""Torus geometry, site indexing, neighborhoods and opinion configurations.

Sites of the three-dimensional torus of side ``L`` are indexed row-major with
x fastest: ``index = x + L*y + L**2*z``.  The indexing is fixed so that
snapshot files are bit-exact reproducible.

The neighborhood is an arbitrary set of ``k >= 3`` distinct nonzero integer
offsets whose integer span has rank 3.  Rank is verified exactly by integer
Gaussian elimination; full generation of the integer lattice (unimodularity)
is *not* verified and is left as a user obligation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "TorusLattice",
    "Configuration",
    "build_torus",
    "neighbors",
    "discordant_fraction",
    "NN6_OFFSETS",
    "E3_OFFSETS",
    "write_snapshot",
    "read_snapshot",
]

# the two neighborhoods used throughout: full nearest-neighbor shell and the
# three positive unit vectors
NN6_OFFSETS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
E3_OFFSETS = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


def _integer_rank(vectors) -> int:
    """Rank of a list of integer vectors, by exact fraction-free elimination."""
    rows = [list(map(int, v)) for v in vectors]
    rank = 0
    ncols = 3
    for col in range(ncols):
        pivot = None
        for i in range(rank, len(rows)):
            if rows[i][col] != 0:
                pivot = i
                break
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        pr = rows[rank]
        for i in range(rank + 1, len(rows)):
            if rows[i][col] != 0:
                a, b = pr[col], rows[i][col]
                rows[i] = [a * rows[i][j] - b * pr[j] for j in range(ncols)]
        rank += 1
    return rank


@dataclass(frozen=True)
class TorusLattice:
    """Immutable geometry of the n-site torus with a fixed offset neighborhood.

    Attributes
    ----------
    side : int
        Side length L; the site count is ``n = L**3``.
    offsets : ndarray, shape (k, 3)
        The neighborhood offsets, in construction order.
    nbr_out : ndarray, shape (n, k), int32
        ``nbr_out[x, j]`` is the site at ``coords(x) + offsets[j]`` (mod L).
    nbr_in : ndarray, shape (n, k), int32
        Sites that have x in *their* neighborhood, i.e. ``coords(x) - offsets[j]``.
        Equal to ``nbr_out`` as a set when the neighborhood is symmetric.
    """

    side: int
    offsets: np.ndarray
    nbr_out: np.ndarray = field(repr=False)
    nbr_in: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.side**3

    @property
    def k(self) -> int:
        return len(self.offsets)

    @property
    def is_symmetric(self) -> bool:
        """True when the offset set is closed under negation."""
        s = {tuple(v) for v in self.offsets.tolist()}
        return all((-a, -b, -c) in s for (a, b, c) in s)

    def site_index(self, x: int, y: int, z: int) -> int:
        L = self.side
        return (x % L) + L * (y % L) + L * L * (z % L)

    def coords(self, site: int) -> tuple[int, int, int]:
        L = self.side
        return site % L, (site // L) % L, site // (L * L)


def build_torus(side: int, offsets) -> TorusLattice:
    """Construct the lattice and precompute both neighbor index tables.

    Raises
    ------
    ValueError
        If ``side < 2``, an offset is zero or repeated, fewer than three
        offsets are given, or the offsets do not span rank 3.
    """
    if int(side) != side or side < 2:
        raise ValueError(f"side must be an integer >= 2, got {side!r}")
    side = int(side)
    offs = [tuple(int(c) for c in v) for v in offsets]
    if any(len(v) != 3 for v in offs):
        raise ValueError("offsets must be 3-vectors")
    if any(v == (0, 0, 0) for v in offs):
        raise ValueError("0 must not be in the neighborhood")
    if len(set(offs)) != len(offs):
        raise ValueError("offsets must be pairwise distinct")
    if len(offs) < 3:
        raise ValueError(f"need at least 3 offsets, got {len(offs)}")
    if _integer_rank(offs) < 3:
        raise ValueError("offsets must span rank 3")
    for v in offs:
        if all(c % side == 0 for c in v):
            raise ValueError(
                f"offset {v} is 0 on the side-{side} torus (self-loop)")

    L = side
    n = L**3
    idx = np.arange(n, dtype=np.int64)
    cx = idx % L
    cy = (idx // L) % L
    cz = idx // (L * L)
    k = len(offs)
    nbr_out = np.empty((n, k), dtype=np.int32)
    nbr_in = np.empty((n, k), dtype=np.int32)
    for j, (ox, oy, oz) in enumerate(offs):
        nbr_out[:, j] = ((cx + ox) % L) + L * ((cy + oy) % L) + L * L * ((cz + oz) % L)
        nbr_in[:, j] = ((cx - ox) % L) + L * ((cy - oy) % L) + L * L * ((cz - oz) % L)
    return TorusLattice(
        side=L,
        offsets=np.array(offs, dtype=np.int64),
        nbr_out=nbr_out,
        nbr_in=nbr_in,
    )


def neighbors(lattice: TorusLattice, site: int) -> np.ndarray:
    """The k neighbors of ``site`` in fixed offset order."""
    if not 0 <= site < lattice.n:
        raise IndexError(f"site {site} out of range [0, {lattice.n})")
    return lattice.nbr_out[site].copy()


class Configuration:
    """A binary opinion field on the lattice, with a cached ones count.

    ``bits`` is a length-n uint8 vector (one byte per site; the hot loops
    trade the denser packing for direct indexing).  ``ones_count`` is kept
    in sync by all mutators.
    """

    __slots__ = ("lattice", "bits", "ones_count")

    def __init__(self, lattice: TorusLattice, bits: np.ndarray | None = None):
        self.lattice = lattice
        if bits is None:
            bits = np.zeros(lattice.n, dtype=np.uint8)
        else:
            bits = np.ascontiguousarray(bits, dtype=np.uint8)
            if bits.shape != (lattice.n,):
                raise ValueError(f"bits must have shape ({lattice.n},)")
            if not np.isin(bits, (0, 1)).all():
                raise ValueError("bits must be 0/1")
        self.bits = bits
        self.ones_count = int(bits.sum())

    @property
    def density(self) -> float:
        return self.ones_count / self.lattice.n

    def copy(self) -> "Configuration":
        out = Configuration.__new__(Configuration)
        out.lattice = self.lattice
        out.bits = self.bits.copy()
        out.ones_count = self.ones_count
        return out

    def get(self, site: int) -> int:
        return int(self.bits[site])

    def set(self, site: int, value: int) -> None:
        value = int(value)
        if value not in (0, 1):
            raise ValueError("value must be 0 or 1")
        old = int(self.bits[site])
        self.bits[site] = value
        self.ones_count += value - old

    def discordant_counts(self) -> np.ndarray:
        """Per-site count of neighbors holding the opposite opinion."""
        bits = self.bits
        disc = np.zeros(self.lattice.n, dtype=np.int64)
        for j in range(self.lattice.k):
            disc += bits[self.lattice.nbr_out[:, j]] != bits
        return disc

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Configuration)
            and self.lattice is other.lattice
            and np.array_equal(self.bits, other.bits)
        )


def discordant_fraction(config: Configuration, site: int) -> Fraction:
    """Fraction of neighbors of ``site`` with the opposite opinion, exact."""
    lat = config.lattice
    if not 0 <= site < lat.n:
        raise IndexError(f"site {site} out of range [0, {lat.n})")
    b = config.bits
    count = int((b[lat.nbr_out[site]] != b[site]).sum())
    return Fraction(count, lat.k)


# -- snapshot text format ---------------------------------------------------
#
# header line:  L=<L> t=<time> q=<q> seed=<seed>
# then, for each z-slice, L lines of L characters '0'/'1' (x varies along a
# line, y across lines), slices separated by one blank line.


def write_snapshot(config: Configuration, fh, t: float, q, seed) -> None:
    """Write the configuration in the plain-text snapshot format."""
    L = config.lattice.side
    own = isinstance(fh, (str, bytes))
    f = open(fh, "w") if own else fh
    try:
        f.write(f"L={L} t={float(t):.17g} q={q} seed={seed}\n")
        grid = config.bits.reshape(L, L, L)  # [z, y, x]
        for z in range(L):
            for y in range(L):
                f.write("".join("1" if v else "0" for v in grid[z, y]))
                f.write("\n")
            if z != L - 1:
                f.write("\n")
    finally:
        if own:
            f.close()


def read_snapshot(fh, lattice: TorusLattice | None = None, offsets=NN6_OFFSETS):
    """Read a snapshot file; returns (Configuration, header dict)."""
    own = isinstance(fh, (str, bytes))
    f = open(fh) if own else fh
    try:
        header = f.readline().strip()
        fields = dict(part.split("=", 1) for part in header.split())
        L = int(fields["L"])
        rows = [line.strip() for line in f if line.strip()]
    finally:
        if own:
            f.close()
    if len(rows) != L * L:
        raise ValueError(f"expected {L * L} rows, got {len(rows)}")
    if lattice is None:
        lattice = build_torus(L, offsets)
    elif lattice.side != L:
        raise ValueError(f"lattice side {lattice.side} != snapshot side {L}")
    bits = np.empty(lattice.n, dtype=np.uint8)
    grid = bits.reshape(L, L, L)
    for z in range(L):
        for y in range(L):
            row = rows[z * L + y]
            if len(row) != L or set(row) - {"0", "1"}:
                raise ValueError(f"bad snapshot row at z={z} y={y}")
            grid[z, y] = np.frombuffer(row.encode(), dtype=np.uint8) - ord("0")
    return Configuration(lattice, bits), fields
