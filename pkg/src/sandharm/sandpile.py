"""Abelian sandpile dynamics on finite box windows.

A height configuration assigns an integer number of grains to each site of a
box window.  Sites holding at least ``gamma`` grains topple, sending one
grain to each of the 2d nearest lattice neighbours; grains sent outside the
window vanish (open boundary), and for gamma > 2d each toppling additionally
dissipates gamma - 2d grains.  Stabilization is order-independent (the
abelian property), which this module exploits by toppling in bulk sweeps; a
single-site reference driver is kept for randomized cross-checks.

Recurrent configurations are characterized by the burning test: repeatedly
remove every site whose height is at least its count of not-yet-removed
neighbours; the configuration is recurrent exactly when all sites burn.
Their number equals the determinant of the toppling matrix, computed here
exactly (fraction-free elimination) or in the log domain through the exact
eigenvalues available on box windows.

The correction operator turns an arbitrary bounded integer field into one
whose restriction to a centered box is recurrent by adding a multiple of
the lattice Laplacian polynomial, following a two-phase scheme: first
subtract at sites holding 2d or more, then add rounds of 0/1 indicator
polynomials supported on the stuck set until the burning test passes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .laurent import LaurentPoly, laplacian_poly
from .window import BoxWindow


# -- height configurations ---------------------------------------------------


@dataclass
class HeightConfig:
    """Integer heights on a box window, with the toppling threshold gamma.

    Heights may exceed gamma - 1 (unstable) and, where an operation
    explicitly permits, go negative.  ``stable`` means every height lies in
    [0, gamma - 1].
    """

    window: BoxWindow
    gamma: int
    heights: np.ndarray

    def __post_init__(self):
        if self.gamma < 2 * self.window.dim:
            raise ValueError("gamma must be at least 2d")
        arr = np.asarray(self.heights)
        if arr.shape != self.window.shape:
            raise ValueError(
                "heights shape %s does not match window shape %s" % (arr.shape, self.window.shape)
            )
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("heights must be integers")
        self.heights = arr.astype(np.int64)

    @property
    def dim(self):
        return self.window.dim

    @property
    def is_stable(self):
        return bool((self.heights >= 0).all() and (self.heights <= self.gamma - 1).all())

    def copy(self):
        return HeightConfig(self.window, self.gamma, self.heights.copy())

    def height_at(self, site):
        return int(self.heights[self.window.index_of(site)])

    @classmethod
    def constant(cls, window, gamma, value):
        return cls(window, gamma, np.full(window.shape, int(value), dtype=np.int64))

    @classmethod
    def all_max(cls, window, gamma):
        return cls.constant(window, gamma, gamma - 1)

    @classmethod
    def delta(cls, window, gamma, site, amount):
        h = np.zeros(window.shape, dtype=np.int64)
        h[window.index_of(site)] = int(amount)
        return cls(window, gamma, h)

    def to_text(self):
        """Grid text form: ``d gamma s1 ... sd`` then rows of heights.

        For d >= 3 the leading axes are flattened into blocks of rows; the
        window's absolute position is not stored.
        """
        dims = " ".join(str(s) for s in self.window.shape)
        lines = ["%d %d %s" % (self.dim, self.gamma, dims)]
        flat = self.heights.reshape(-1, self.window.shape[-1])
        for row in flat:
            lines.append(" ".join(str(int(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, lo=None):
        rows = [ln.strip() for ln in text.splitlines()]
        rows = [ln for ln in rows if ln and not ln.startswith("#")]
        if not rows:
            raise ValueError("empty grid text")
        head = rows[0].split()
        if len(head) < 3:
            raise ValueError("header must be 'd gamma s1 ... sd'")
        d = int(head[0])
        gamma = int(head[1])
        shape = tuple(int(t) for t in head[2:])
        if len(shape) != d:
            raise ValueError("header lists %d sizes for dimension %d" % (len(shape), d))
        body = [[int(t) for t in ln.split()] for ln in rows[1:]]
        expected_rows = int(np.prod(shape[:-1]))
        if len(body) != expected_rows:
            raise ValueError("expected %d height rows, found %d" % (expected_rows, len(body)))
        for ln in body:
            if len(ln) != shape[-1]:
                raise ValueError("rows must have %d entries" % shape[-1])
        heights = np.array(body, dtype=np.int64).reshape(shape)
        window = BoxWindow.from_shape(shape, lo=lo)
        return cls(window, gamma, heights)


@dataclass
class Odometer:
    """Per-site toppling counts plus the total number of grains lost.

    ``total_mass_lost`` counts every grain that left the system: those sent
    across the window boundary and, for gamma > 2d, the gamma - 2d grains
    dissipated by each toppling.
    """

    counts: np.ndarray
    total_mass_lost: int


@dataclass
class BurnReport:
    recurrent: bool
    burn_order: tuple
    stuck_set: frozenset


# -- elementary operations ---------------------------------------------------


def neighbour_count(window, site):
    """Number of the 2d nearest lattice neighbours lying inside the window."""
    return window.neighbour_count(site)


def _neighbour_shift_sum(field):
    """Sum of the 2d axis shifts of ``field``, zero-padded at the edges."""
    out = np.zeros_like(field)
    d = field.ndim
    for ax in range(d):
        src_lo = [slice(None)] * d
        dst_lo = [slice(None)] * d
        src_lo[ax] = slice(1, None)
        dst_lo[ax] = slice(None, -1)
        out[tuple(dst_lo)] += field[tuple(src_lo)]
        out[tuple(src_lo)] += field[tuple(dst_lo)]
    return out


def _neighbour_count_grid(window):
    ones = np.ones(window.shape, dtype=np.int64)
    return _neighbour_shift_sum(ones)


def topple_at(v, site):
    """Single toppling: site loses gamma, in-window neighbours gain one."""
    idx = v.window.index_of(site)
    if v.heights[idx] < v.gamma:
        raise ValueError("site %r is not unstable" % (site,))
    out = v.heights.copy()
    out[idx] -= v.gamma
    site = tuple(site)
    for ax in range(v.dim):
        for step in (-1, 1):
            nb = site[:ax] + (site[ax] + step,) + site[ax + 1 :]
            if nb in v.window:
                out[v.window.index_of(nb)] += 1
    return HeightConfig(v.window, v.gamma, out)


def stabilize(v):
    """Topple until stable; returns the final configuration and odometer.

    Bulk sweeps: every unstable site topples floor(h / gamma) times at once,
    which the abelian property makes equivalent to any one-at-a-time order.
    The exact integer identity  final = initial - (gamma*counts - shifts)
    holds by construction and is asserted cheap in tests.
    """
    if (v.heights < 0).any():
        raise ValueError("stabilize requires nonnegative heights")
    h = v.heights.copy()
    counts = np.zeros_like(h)
    gamma = v.gamma
    while True:
        k = h // gamma
        np.maximum(k, 0, out=k)
        if not k.any():
            break
        counts += k
        h -= gamma * k
        h += _neighbour_shift_sum(k)
    lost = int(v.heights.sum() - h.sum())
    return HeightConfig(v.window, v.gamma, h), Odometer(counts, lost)


def stabilize_serial(v, rng=None):
    """Reference stabilization toppling one random unstable site at a time.

    Slow; exists so tests can exercise the abelian property against the
    bulk-sweep driver with genuinely different toppling orders.
    """
    if (v.heights < 0).any():
        raise ValueError("stabilize requires nonnegative heights")
    if rng is None:
        rng = np.random.default_rng()
    h = v.heights.copy()
    counts = np.zeros_like(h)
    gamma = v.gamma
    while True:
        unstable = np.argwhere(h >= gamma)
        if len(unstable) == 0:
            break
        idx = tuple(unstable[rng.integers(len(unstable))])
        h[idx] -= gamma
        counts[idx] += 1
        for ax in range(v.dim):
            for step in (-1, 1):
                nb = list(idx)
                nb[ax] += step
                if 0 <= nb[ax] < h.shape[ax]:
                    h[tuple(nb)] += 1
    lost = int(v.heights.sum() - h.sum())
    return HeightConfig(v.window, v.gamma, h), Odometer(counts, lost)


def burning_test(v):
    """Dhar's burning test with parallel rounds.

    Each round removes every remaining site whose height is at least its
    count of remaining neighbours; the order within a round is lexicographic.
    Heights may be arbitrary integers (negative sites simply never burn),
    but a height above gamma - 1 is rejected since the test is only
    meaningful for stable configurations.
    """
    if (v.heights > v.gamma - 1).any():
        raise ValueError("burning test requires heights <= gamma - 1")
    alive = np.ones(v.window.shape, dtype=bool)
    order = []
    rnd = 0
    while alive.any():
        rnd += 1
        n_alive = _neighbour_shift_sum(alive.astype(np.int64))
        eligible = alive & (v.heights >= n_alive)
        if not eligible.any():
            break
        for idx in np.argwhere(eligible):
            order.append((rnd, v.window.site_of(tuple(idx))))
        alive &= ~eligible
    stuck = frozenset(v.window.site_of(tuple(idx)) for idx in np.argwhere(alive))
    return BurnReport(not alive.any(), tuple(order), stuck)


def is_recurrent(v):
    return burning_test(v).recurrent


# -- counting ----------------------------------------------------------------


def toppling_matrix(window, gamma):
    """Dense toppling matrix: gamma on the diagonal, -1 at adjacent pairs."""
    sites = list(window.sites())
    pos = {s: i for i, s in enumerate(sites)}
    n = len(sites)
    mat = np.zeros((n, n), dtype=np.int64)
    for s, i in pos.items():
        mat[i, i] = gamma
        for ax in range(window.dim):
            for step in (-1, 1):
                nb = s[:ax] + (s[ax] + step,) + s[ax + 1 :]
                j = pos.get(nb)
                if j is not None:
                    mat[i, j] = -1
    return mat


def _bareiss_det(mat):
    """Exact integer determinant by fraction-free Gaussian elimination."""
    a = [[int(x) for x in row] for row in mat]
    n = len(a)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def toppling_determinant_exact(window, gamma):
    """det of the toppling matrix as an exact integer (small windows)."""
    if window.size > 400:
        raise ValueError("exact determinant limited to 400 sites")
    return _bareiss_det(toppling_matrix(window, gamma))


def _log_det_box(window, gamma):
    """log det via the exact eigenvalues gamma - 2 sum cos(pi i_j/(s_j+1))."""
    shape = window.shape
    total = np.zeros((), dtype=float)
    grids = np.meshgrid(
        *[2.0 * np.cos(np.pi * np.arange(1, s + 1) / (s + 1)) for s in shape], indexing="ij"
    )
    eig = float(gamma) - sum(grids)
    if (eig <= 0).any():
        raise ValueError("toppling matrix not positive definite")
    total = np.log(eig).sum()
    return float(total)


def _burn_all(configs, window, gamma):
    """Vectorized burning test over many stable configs (rows of heights)."""
    sites = list(window.sites())
    n = len(sites)
    pos = {s: i for i, s in enumerate(sites)}
    adj = np.zeros((n, n), dtype=np.int64)
    for s, i in pos.items():
        for ax in range(window.dim):
            for step in (-1, 1):
                nb = s[:ax] + (s[ax] + step,) + s[ax + 1 :]
                j = pos.get(nb)
                if j is not None:
                    adj[i, j] = 1
    V = np.asarray(configs)
    alive = np.ones(V.shape, dtype=bool)
    for _ in range(n):
        n_alive = alive.astype(np.int64) @ adj
        eligible = alive & (V >= n_alive)
        if not eligible.any():
            break
        alive &= ~eligible
    return ~alive.any(axis=1)


def count_recurrent(window, gamma, backend="determinant"):
    """Number of recurrent configurations on the window.

    ``bruteforce`` enumerates all gamma^|E| stable configurations and counts
    burning-test passes, returning an exact integer; ``determinant`` returns
    the log of det of the toppling matrix, evaluated through its exact box
    eigenvalues.
    """
    size = window.size
    if backend == "bruteforce":
        if gamma**size > 10**7:
            raise ValueError("bruteforce limited to gamma^|E| <= 1e7")
        count = 0
        chunk = 1 << 16
        it = itertools.product(range(gamma), repeat=size)
        while True:
            block = list(itertools.islice(it, chunk))
            if not block:
                break
            count += int(_burn_all(np.array(block, dtype=np.int64), window, gamma).sum())
        return count
    if backend == "determinant":
        if size > 10**6:
            raise ValueError("determinant backend limited to 1e6 sites")
        return _log_det_box(window, gamma)
    raise ValueError("unknown backend %r" % (backend,))


def finite_entropy_estimate(side, d, gamma):
    """log of the recurrent count per site on a side^d window."""
    if side < 1:
        raise ValueError("side must be >= 1")
    window = BoxWindow.from_shape((side,) * d)
    return count_recurrent(window, gamma, backend="determinant") / float(side**d)


# -- polynomial bridges ------------------------------------------------------


def poly_heights(window, poly):
    """Coefficient field of a Laurent polynomial laid out on a window.

    Raises when the support does not fit, so nothing is silently dropped.
    """
    if poly.dim != window.dim:
        raise ValueError("dimension mismatch")
    arr = np.zeros(window.shape, dtype=np.int64)
    for site, coeff in poly.terms.items():
        if site not in window:
            raise ValueError("support site %r outside window" % (site,))
        arr[window.index_of(site)] = coeff
    return arr


def add_poly(v, poly):
    """New configuration with the polynomial's coefficients added on."""
    return HeightConfig(v.window, v.gamma, v.heights + poly_heights(v.window, poly))


# -- correction operator -----------------------------------------------------


def correct_to_recurrent(v, M):
    """Polynomial h with support in Q_M making v + h*f recurrent on Q_M.

    Two phases.  Phase 1 subtracts f at any Q_M site holding at least 2d
    grains (like toppling without a boundary: the surplus lands on the
    M+1 shell, which the window must contain).  Phase 2 adds rounds of 0/1
    polynomials: each round's support is the burning-test stuck set plus
    all negative sites, extended until the addition creates no fresh
    negatives; heights on Q_M stay below 2d throughout, so the rounds
    decrease the stuck region monotonically in an onion-peeling fashion.
    The result is unique regardless of these order choices.

    The critical threshold 2d is used no matter the configuration's gamma:
    the corrected patch is recurrent for the critical model that the
    construction belongs to.
    """
    d = v.dim
    if M < 1:
        raise ValueError("M must be >= 1")
    inner = BoxWindow.centered(d, M)
    outer = BoxWindow.centered(d, M + 1)
    if not v.window.contains_window(outer):
        raise ValueError("window must contain the centered box of radius M+1")
    two_d = 2 * d
    cur = v.heights.copy()
    off = tuple(-l for l in v.window.lo)

    def box_view(arr, box):
        sl = tuple(slice(lo + o, hi + o + 1) for lo, hi, o in zip(box.lo, box.hi, off))
        return arr[sl]

    h_net = np.zeros(inner.shape, dtype=np.int64)

    # phase 1: subtract f wherever Q_M holds 2d or more
    while True:
        sub = box_view(cur, inner)
        k = sub // two_d
        np.maximum(k, 0, out=k)
        if not k.any():
            break
        h_net -= k
        sub -= two_d * k
        spread = np.zeros(outer.shape, dtype=np.int64)
        interior = tuple(slice(1, -1) for _ in range(d))
        spread[interior] = k
        box_view(cur, outer)[...] += _neighbour_shift_sum(spread)

    # phase 2: add 0/1 rounds on the stuck/negative set until recurrent
    for _ in range(1_000_000):
        sub = box_view(cur, inner)
        report = burning_test(HeightConfig(inner, two_d, sub.copy()))
        negatives = {inner.site_of(tuple(i)) for i in np.argwhere(sub < 0)}
        if report.recurrent and not negatives:
            break
        support = set(report.stuck_set) | negatives
        while True:
            s_mask = np.zeros(inner.shape, dtype=np.int64)
            for s in support:
                s_mask[inner.index_of(s)] = 1
            delta_inner = two_d * s_mask - _neighbour_shift_sum(s_mask)
            fresh = {
                inner.site_of(tuple(i))
                for i in np.argwhere((sub + delta_inner < 0) & (s_mask == 0))
            }
            if not fresh:
                break
            support |= fresh
        h_net += s_mask
        spread = np.zeros(outer.shape, dtype=np.int64)
        interior = tuple(slice(1, -1) for _ in range(d))
        spread[interior] = s_mask
        box_view(cur, outer)[...] += two_d * spread - _neighbour_shift_sum(spread)
    else:
        raise RuntimeError("correction did not converge")

    terms = {}
    for idx in np.argwhere(h_net != 0):
        terms[inner.site_of(tuple(idx))] = int(h_net[tuple(idx)])
    return LaurentPoly(d, terms)


def apply_correction(v, h):
    """v + h * f for the critical Laplacian of v's dimension."""
    f = laplacian_poly(v.dim)
    return add_poly(v, h * f)


# -- group operation ---------------------------------------------------------


def group_add(v, w):
    """Sandpile-group addition: pointwise sum, then stabilization."""
    if v.window != w.window or v.gamma != w.gamma:
        raise ValueError("operands must share window and gamma")
    if not is_recurrent(v) or not is_recurrent(w):
        raise ValueError("group_add requires recurrent operands")
    total = HeightConfig(v.window, v.gamma, v.heights + w.heights)
    out, _ = stabilize(total)
    return out


def random_recurrent(window, gamma, rng):
    """Uniform-ish recurrent sample: all-max plus random grains, stabilized.

    Adding to a recurrent configuration and stabilizing lands back in the
    recurrent set, so the result always passes the burning test.
    """
    extra = rng.integers(0, gamma, size=window.shape)
    loaded = HeightConfig(window, gamma, extra + (gamma - 1))
    out, _ = stabilize(loaded)
    return out


# -- max-height diagnostics --------------------------------------------------


def components(mask, connectivity="max"):
    """Connected components of a boolean site mask.

    ``max`` connectivity joins sites at max-norm distance 1 (the convention
    the surrounding theory uses for maximal-height sets); ``lattice`` joins
    only the 2d nearest neighbours.
    """
    mask = np.asarray(mask, dtype=bool)
    d = mask.ndim
    if connectivity == "max":
        structure = np.ones((3,) * d, dtype=bool)
    elif connectivity == "lattice":
        structure = ndimage.generate_binary_structure(d, 1)
    else:
        raise ValueError("connectivity must be 'max' or 'lattice'")
    labels, n = ndimage.label(mask, structure=structure)
    return labels, int(n)


@dataclass
class WitnessReport:
    max_set_connected: bool
    complement_components: int
    complement_touches_boundary: bool
    min_height: int
    recurrent: bool

    @property
    def satisfied(self):
        return (
            self.max_set_connected
            and not self.complement_touches_boundary
            and self.min_height == 0
            and self.recurrent
        )


def injectivity_witness(window, gamma):
    """Configuration whose maximal-height set is connected and co-finite.

    Height gamma - 1 everywhere except at sites with all coordinates even,
    which hold 0; the maximal set forms a connected grout pattern and the
    complement splits into isolated single-site cells.  On a centered box
    of odd radius the boundary ring has an odd coordinate everywhere, so
    the zero cells stay interior.
    """
    idx = np.indices(window.shape)
    all_even = np.ones(window.shape, dtype=bool)
    for ax in range(window.dim):
        all_even &= (idx[ax] + window.lo[ax]) % 2 == 0
    heights = np.where(all_even, 0, gamma - 1).astype(np.int64)
    return HeightConfig(window, gamma, heights)


def witness_report(v):
    """Check the injectivity-witness conditions at finite scale.

    Connectivity of the maximal set uses max-norm adjacency; a complement
    component is provisionally finite when it avoids the window boundary
    (the implied extension fills the outside with maximal heights).
    """
    max_set = v.heights == v.gamma - 1
    _, n_max = components(max_set, connectivity="max")
    comp_labels, n_comp = components(~max_set, connectivity="max")
    touches = False
    d = v.dim
    for ax in range(d):
        for edge in (0, -1):
            sl = [slice(None)] * d
            sl[ax] = edge
            if (comp_labels[tuple(sl)] > 0).any():
                touches = True
    return WitnessReport(
        max_set_connected=n_max == 1,
        complement_components=n_comp,
        complement_touches_boundary=touches,
        min_height=int(v.heights.min()),
        recurrent=is_recurrent(v),
    )
