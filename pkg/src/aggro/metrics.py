"""Monge-Kantorovich distance d1, interaction energy, dissipation monitor.

d1 in 1D is the exact L1 distance of CDFs, integrated piecewise over the
merged breakpoint set; mixed measures (atoms plus cell-constant pieces, as
produced by the reconstruction) are supported.  d1 in 2D solves the balanced
transportation problem exactly with a successive-shortest-augmenting-path
method (Dijkstra with node potentials); the result is certified optimal by
complementary slackness plus dual feasibility of the final potentials, so a
wrong answer raises instead of being returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .fftconv import FFTConv1D, FFTConv2D, dense_conv_1d, dense_conv_2d
from .measures import AtomList, DiscreteMeasure1D, DiscreteMeasure2D, Grid1D
from .potentials import Potential, value_table, value_table_2d

__all__ = [
    "Mixed1D",
    "mixed_from_reconstruction",
    "d1_1d",
    "d1_2d",
    "TransportProblem",
    "solve_transport",
    "interaction_energy",
    "make_energy_evaluator",
    "EnergyReport",
    "dissipation_check",
    "write_energy_csv",
]

MASS_MISMATCH_RTOL = 1e-9
ATOM_MASS_THRESHOLD = 1e-14
DEFAULT_ATOM_CAP = 20_000


# ----------------------------------------------------------------------
# 1D: exact CDF integration
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Mixed1D:
    """Atoms plus piecewise-constant density pieces on disjoint intervals."""

    atom_positions: np.ndarray
    atom_masses: np.ndarray
    piece_lo: np.ndarray
    piece_hi: np.ndarray
    piece_density: np.ndarray

    def __post_init__(self):
        for name in ("atom_positions", "atom_masses", "piece_lo", "piece_hi",
                     "piece_density"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, a)
        if self.atom_positions.shape != self.atom_masses.shape:
            raise ValueError("atom arrays must have matching shapes")
        if not (self.piece_lo.shape == self.piece_hi.shape == self.piece_density.shape):
            raise ValueError("piece arrays must have matching shapes")
        if np.any(self.atom_masses < 0.0) or np.any(self.piece_density < 0.0):
            raise ValueError("mixed measure must be nonnegative")
        if np.any(self.piece_hi <= self.piece_lo):
            raise ValueError("pieces must have positive length")

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.atom_masses)) + float(
            np.sum(self.piece_density * (self.piece_hi - self.piece_lo))
        )


def mixed_from_reconstruction(grid: Grid1D, sigma: np.ndarray,
                              rho_tilde: np.ndarray) -> Mixed1D:
    """The reconstructed measure r: residual atoms at the midpoints plus
    constant density sigma_i on the cell around each gridpoint."""
    mids = grid.midpoints()
    pts = grid.gridpoints()
    masses = grid.dx * np.asarray(rho_tilde)
    keep = masses > 0.0
    sig = np.asarray(sigma)
    nz = sig > 0.0
    return Mixed1D(
        mids[keep], masses[keep],
        pts[nz] - 0.5 * grid.dx, pts[nz] + 0.5 * grid.dx, sig[nz],
    )


def _as_mixed(obj) -> Mixed1D:
    empty = np.empty(0)
    if isinstance(obj, Mixed1D):
        return obj
    if isinstance(obj, DiscreteMeasure1D):
        return Mixed1D(obj.grid.midpoints(), obj.cell_masses(), empty, empty, empty)
    if isinstance(obj, AtomList):
        if obj.dim != 1:
            raise ValueError("d1_1d needs 1D atoms")
        return Mixed1D(obj.positions, obj.masses, empty, empty, empty)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a 1D measure")


def _jumps_and_slopes(m: Mixed1D, xs: np.ndarray):
    jumps = np.zeros(xs.shape[0])
    idx = np.searchsorted(xs, m.atom_positions)
    np.add.at(jumps, idx, m.atom_masses)
    slopes = np.zeros(xs.shape[0] - 1)
    lo_idx = np.searchsorted(xs, m.piece_lo)
    hi_idx = np.searchsorted(xs, m.piece_hi)
    for a, b, rho in zip(lo_idx, hi_idx, m.piece_density):
        slopes[a:b] += rho
    return jumps, slopes


def d1_1d(mu, nu) -> float:
    """Exact d1 between two 1D measures (grid measures, atom lists or mixed
    reconstruction measures): the integral of |F_mu - F_nu| over the line.

    Masses must agree to 1e-9 (relative); roundoff-level mismatch is repaired
    by scaling the lighter measure.
    """
    a = _as_mixed(mu)
    b = _as_mixed(nu)
    ma, mb = a.total_mass, b.total_mass
    scale_a, scale_b = _balance_factors(ma, mb)

    xs = np.unique(np.concatenate([
        a.atom_positions, b.atom_positions,
        a.piece_lo, a.piece_hi, b.piece_lo, b.piece_hi,
    ]))
    if xs.size == 0:
        return 0.0
    ja, sa = _jumps_and_slopes(a, xs)
    jb, sb = _jumps_and_slopes(b, xs)
    jumps = scale_a * ja - scale_b * jb
    slopes = scale_a * sa - scale_b * sb

    total = 0.0
    diff = 0.0
    for k in range(xs.shape[0] - 1):
        diff += jumps[k]
        h = xs[k + 1] - xs[k]
        lo = diff
        hi = diff + slopes[k] * h
        if lo == 0.0 and hi == 0.0:
            pass
        elif lo * hi >= 0.0:
            total += 0.5 * h * (abs(lo) + abs(hi))
        else:
            # sign change at the root of the linear piece
            u = -lo / slopes[k]
            total += 0.5 * (abs(lo) * u + abs(hi) * (h - u))
        diff = hi
    return total


def _balance_factors(ma: float, mb: float, scale: float | None = None) -> tuple[float, float]:
    if ma == 0.0 and mb == 0.0:
        return 1.0, 1.0
    big = max(ma, mb) if scale is None else max(ma, mb, scale)
    if abs(ma - mb) > MASS_MISMATCH_RTOL * big:
        raise ValueError(
            f"mass mismatch beyond tolerance: {ma!r} vs {mb!r}"
        )
    # Repair roundoff by scaling the lighter side up.
    if ma < mb:
        return mb / ma, 1.0
    if mb < ma:
        return 1.0, ma / mb
    return 1.0, 1.0


# ----------------------------------------------------------------------
# 2D: exact transport
# ----------------------------------------------------------------------

@dataclass
class TransportProblem:
    """Balanced transportation problem with Euclidean ground cost.

    `mass_scale` optionally widens the balance tolerance to 1e-9 of that
    scale (used when the sides are small residuals of much heavier
    measures)."""

    source_positions: np.ndarray
    source_masses: np.ndarray
    sink_positions: np.ndarray
    sink_masses: np.ndarray
    mass_scale: float | None = None

    def __post_init__(self):
        sp = np.ascontiguousarray(self.source_positions, dtype=np.float64)
        tp = np.ascontiguousarray(self.sink_positions, dtype=np.float64)
        sm = np.ascontiguousarray(self.source_masses, dtype=np.float64)
        tm = np.ascontiguousarray(self.sink_masses, dtype=np.float64)
        if sp.ndim != 2 or sp.shape[1] != 2 or tp.ndim != 2 or tp.shape[1] != 2:
            raise ValueError("positions must have shape (N, 2)")
        if np.any(sm < 0.0) or np.any(tm < 0.0):
            raise ValueError("masses must be >= 0")
        ms, mt = float(np.sum(sm)), float(np.sum(tm))
        fs, ft = _balance_factors(ms, mt, self.mass_scale)
        self.source_positions = sp
        self.sink_positions = tp
        self.source_masses = sm * fs
        self.sink_masses = tm * ft


_I8 = types.int64


@njit(cache=True)
def _heap_push(hkey, hnode, size, key, node):
    if size == hkey.shape[0]:
        nk = np.empty(2 * size, np.float64)
        nn = np.empty(2 * size, np.int64)
        nk[:size] = hkey
        nn[:size] = hnode
        hkey, hnode = nk, nn
    i = size
    hkey[i] = key
    hnode[i] = node
    while i > 0:
        p = (i - 1) // 2
        if hkey[p] <= hkey[i]:
            break
        hkey[p], hkey[i] = hkey[i], hkey[p]
        hnode[p], hnode[i] = hnode[i], hnode[p]
        i = p
    return hkey, hnode, size + 1


@njit(cache=True)
def _heap_pop(hkey, hnode, size):
    key = hkey[0]
    node = hnode[0]
    size -= 1
    hkey[0] = hkey[size]
    hnode[0] = hnode[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        small = i
        if l < size and hkey[l] < hkey[small]:
            small = l
        if r < size and hkey[r] < hkey[small]:
            small = r
        if small == i:
            break
        hkey[small], hkey[i] = hkey[i], hkey[small]
        hnode[small], hnode[i] = hnode[i], hnode[small]
        i = small
    return key, node, size


@njit(cache=True)
def _block_partition(tx, ty, target_block):
    """Partition sinks into a uniform grid of spatial blocks.

    Returns (block_of, order, start, boxes) with sinks grouped CSR-style by
    block in `order` and tight bounding boxes per block."""
    nt = tx.shape[0]
    xmin, xmax = tx.min(), tx.max()
    ymin, ymax = ty.min(), ty.max()
    nb_total = max(1, nt // target_block)
    ex = max(xmax - xmin, 1e-300)
    ey = max(ymax - ymin, 1e-300)
    aspect = ex / ey
    nbx = max(1, int(round(math.sqrt(nb_total * aspect))))
    nby = max(1, (nb_total + nbx - 1) // nbx)
    wx = ex / nbx
    wy = ey / nby
    nb = nbx * nby
    block_of = np.empty(nt, np.int64)
    for j in range(nt):
        bx = int((tx[j] - xmin) / wx)
        if bx >= nbx:
            bx = nbx - 1
        by = int((ty[j] - ymin) / wy)
        if by >= nby:
            by = nby - 1
        block_of[j] = bx * nby + by
    counts = np.zeros(nb + 1, np.int64)
    for j in range(nt):
        counts[block_of[j] + 1] += 1
    start = np.cumsum(counts)
    cursor = start[:-1].copy()
    order = np.empty(nt, np.int64)
    for j in range(nt):
        b = block_of[j]
        order[cursor[b]] = j
        cursor[b] += 1
    boxes = np.empty((nb, 4))
    boxes[:, 0] = np.inf
    boxes[:, 1] = -np.inf
    boxes[:, 2] = np.inf
    boxes[:, 3] = -np.inf
    for j in range(nt):
        b = block_of[j]
        if tx[j] < boxes[b, 0]:
            boxes[b, 0] = tx[j]
        if tx[j] > boxes[b, 1]:
            boxes[b, 1] = tx[j]
        if ty[j] < boxes[b, 2]:
            boxes[b, 2] = ty[j]
        if ty[j] > boxes[b, 3]:
            boxes[b, 3] = ty[j]
    return block_of, order, start, boxes


@njit(inline="always")
def _box_dist(x, y, box):
    dx = box[0] - x
    if x - box[1] > dx:
        dx = x - box[1]
    if dx < 0.0:
        dx = 0.0
    dy = box[2] - y
    if y - box[3] > dy:
        dy = y - box[3]
    if dy < 0.0:
        dy = 0.0
    return math.sqrt(dx * dx + dy * dy)


@njit(cache=True)
def _nearest_sink_distances(sx, sy, tx, ty):
    """Brute-force distance from each source to its nearest sink (base-level
    dual warm start; feasible by the triangle inequality)."""
    out = np.empty(sx.shape[0])
    for i in range(sx.shape[0]):
        best = np.inf
        for j in range(tx.shape[0]):
            cdx = tx[j] - sx[i]
            cdy = ty[j] - sy[i]
            c = math.sqrt(cdx * cdx + cdy * cdy)
            if c < best:
                best = c
        out[i] = best
    return out


@njit(cache=True)
def _ssp_solve(sx, sy, smass, tx, ty, tmass, pot_s, pot_t, eps, max_augs):
    """Shortest augmenting paths with potentials on the bipartite support.

    `pot_s`/`pot_t` must be a dual-feasible start (c_ij + pot_s[i] -
    pot_t[j] >= 0 for all pairs); they are updated in place.  Sink-side edges
    are enumerated lazily block by block with admissible lower bounds (block
    distance minus the block's maximum sink potential), so Dijkstra explores
    only the neighborhood it needs.  Returns (status, unmet, cost, pot_s,
    pot_t, esrc, esnk, eflow, n_edges, stats); status 0 = optimal, 1 = ran
    out of reachable demand (drift), 2 = augmentation budget exhausted.
    """
    ns = smass.shape[0]
    nt = tmass.shape[0]
    supply = smass.copy()
    demand = tmass.copy()

    block_of, border, bstart, boxes = _block_partition(tx, ty, 160)
    nb = boxes.shape[0]
    pmax_b = np.full(nb, -np.inf)
    for j in range(nt):
        b = block_of[j]
        if pot_t[j] > pmax_b[b]:
            pmax_b[b] = pot_t[j]
    ndone_b = np.zeros(nb, np.int64)

    ecap = 4 * (ns + nt) + 16
    esrc = np.empty(ecap, np.int64)
    esnk = np.empty(ecap, np.int64)
    eflow = np.empty(ecap, np.float64)
    enext = np.empty(ecap, np.int64)
    head_t = np.full(nt, -1, np.int64)
    ne = 0
    key2e = Dict.empty(_I8, _I8)

    dist_s = np.empty(ns)
    dist_t = np.empty(nt)
    done_s = np.zeros(ns, np.uint8)
    done_t = np.zeros(nt, np.uint8)
    prev_t = np.empty(nt, np.int64)
    prev_s = np.empty(ns, np.int64)
    settled_s = np.empty(ns, np.int64)
    settled_t = np.empty(nt, np.int64)

    hkey = np.empty(4096, np.float64)
    hnode = np.empty(4096, np.int64)

    # Heap node codes: sink j -> j; source i -> nt + i;
    # block-scan token (i, b) -> nt + ns + i*nb + b.
    token0 = nt + ns

    targets = np.empty(nt, np.int64)

    n_augs = 0
    n_phases = 0
    status = 0
    unmet = 0.0
    stat_settle_s = 0
    stat_settle_t = 0
    stat_tokens = 0
    for s0 in range(ns):
        if status != 0:
            break
        while supply[s0] > eps:
            if n_phases >= max_augs:
                status = 2
                break
            # --- One Dijkstra phase: settle demand sinks until their demand
            # covers the remaining supply of s0, then augment along all their
            # (tight) tree paths, shortest first.
            n_phases += 1
            dist_s[:] = np.inf
            dist_t[:] = np.inf
            done_s[:] = 0
            done_t[:] = 0
            ndone_b[:] = 0
            n_set_s = 0
            n_set_t = 0
            dist_s[s0] = 0.0
            hsize = 0
            hkey, hnode, hsize = _heap_push(hkey, hnode, hsize, 0.0, nt + s0)
            n_targets = 0
            collected = 0.0
            d_phase = 0.0
            while hsize > 0:
                d, node, hsize = _heap_pop(hkey, hnode, hsize)
                if node >= token0:
                    # Scan one sink block on behalf of a settled source.
                    stat_tokens += 1
                    rem = node - token0
                    i = rem // nb
                    b = rem - i * nb
                    di = dist_s[i]
                    ps = pot_s[i]
                    px = sx[i]
                    py = sy[i]
                    for k in range(bstart[b], bstart[b + 1]):
                        j = border[k]
                        if done_t[j]:
                            continue
                        cdx = tx[j] - px
                        cdy = ty[j] - py
                        rc = math.sqrt(cdx * cdx + cdy * cdy) + ps - pot_t[j]
                        if rc < 0.0:
                            rc = 0.0
                        nd = di + rc
                        if nd < dist_t[j]:
                            dist_t[j] = nd
                            prev_t[j] = i
                            hkey, hnode, hsize = _heap_push(hkey, hnode, hsize, nd, j)
                elif node >= nt:
                    i = node - nt
                    if done_s[i]:
                        continue
                    done_s[i] = 1
                    d_phase = d
                    settled_s[n_set_s] = i
                    n_set_s += 1
                    stat_settle_s += 1
                    ps = pot_s[i]
                    px = sx[i]
                    py = sy[i]
                    for b in range(nb):
                        if ndone_b[b] == bstart[b + 1] - bstart[b]:
                            continue
                        lb = d + _box_dist(px, py, boxes[b]) + ps - pmax_b[b]
                        if lb < d:
                            lb = d
                        hkey, hnode, hsize = _heap_push(
                            hkey, hnode, hsize, lb, token0 + i * nb + b)
                else:
                    j = node
                    if done_t[j]:
                        continue
                    done_t[j] = 1
                    d_phase = d
                    settled_t[n_set_t] = j
                    n_set_t += 1
                    stat_settle_t += 1
                    ndone_b[block_of[j]] += 1
                    if demand[j] > 0.0:
                        targets[n_targets] = j
                        n_targets += 1
                        collected += demand[j]
                        if collected >= supply[s0]:
                            break
                    e = head_t[j]
                    while e != -1:
                        if eflow[e] > 0.0:
                            i = esrc[e]
                            if not done_s[i]:
                                cdx = tx[j] - sx[i]
                                cdy = ty[j] - sy[i]
                                rc = pot_t[j] - pot_s[i] - math.sqrt(cdx * cdx + cdy * cdy)
                                if rc < 0.0:
                                    rc = 0.0
                                nd = d + rc
                                if nd < dist_s[i]:
                                    dist_s[i] = nd
                                    prev_s[i] = e
                                    hkey, hnode, hsize = _heap_push(hkey, hnode, hsize, nd, nt + i)
                        e = enext[e]
            if n_targets == 0:
                # No positive demand is reachable; whatever remains is the
                # supply/demand drift accumulated by the augmentations.
                status = 1
                unmet = supply[s0]
                break
            # Settled nodes all lie at distance <= d_phase and unexplored
            # candidates at >= d_phase (heap keys lower-bound them), so this
            # update keeps reduced costs nonnegative and tree paths tight.
            for k in range(n_set_s):
                i = settled_s[k]
                pot_s[i] += dist_s[i] - d_phase
            for k in range(n_set_t):
                j = settled_t[k]
                pot_t[j] += dist_t[j] - d_phase
            for k in range(n_set_t):
                b = block_of[settled_t[k]]
                mx = -np.inf
                for q in range(bstart[b], bstart[b + 1]):
                    p = pot_t[border[q]]
                    if p > mx:
                        mx = p
                pmax_b[b] = mx

            for m in range(n_targets):
                if supply[s0] <= eps:
                    break
                target = targets[m]
                if demand[target] <= 0.0:
                    continue
                # First pass: bottleneck along the alternating tree path;
                # earlier augmentations may have drained a backward arc, in
                # which case the path is skipped until the next phase.
                delta = supply[s0]
                if demand[target] < delta:
                    delta = demand[target]
                ok = True
                j = target
                while True:
                    i = prev_t[j]
                    if i == s0:
                        break
                    e = prev_s[i]
                    if eflow[e] <= 0.0:
                        ok = False
                        break
                    if eflow[e] < delta:
                        delta = eflow[e]
                    j = esnk[e]
                if not ok or delta <= 0.0:
                    continue
                n_augs += 1
                # Second pass: apply.
                j = target
                while True:
                    i = prev_t[j]
                    key = i * nt + j
                    if key in key2e:
                        eflow[key2e[key]] += delta
                    else:
                        if ne == ecap:
                            ecap *= 2
                            esrc2 = np.empty(ecap, np.int64)
                            esnk2 = np.empty(ecap, np.int64)
                            eflow2 = np.empty(ecap, np.float64)
                            enext2 = np.empty(ecap, np.int64)
                            esrc2[:ne] = esrc
                            esnk2[:ne] = esnk
                            eflow2[:ne] = eflow
                            enext2[:ne] = enext
                            esrc, esnk, eflow, enext = esrc2, esnk2, eflow2, enext2
                        esrc[ne] = i
                        esnk[ne] = j
                        eflow[ne] = delta
                        enext[ne] = head_t[j]
                        head_t[j] = ne
                        key2e[key] = ne
                        ne += 1
                    if i == s0:
                        break
                    e = prev_s[i]
                    eflow[e] -= delta
                    j = esnk[e]
                if delta >= supply[s0]:
                    supply[s0] = 0.0
                else:
                    supply[s0] -= delta
                if delta >= demand[target]:
                    demand[target] = 0.0
                else:
                    demand[target] -= delta

    if status == 1:
        unmet = 0.0
        for i in range(ns):
            unmet += supply[i]
    cost = 0.0
    for e in range(ne):
        cdx = tx[esnk[e]] - sx[esrc[e]]
        cdy = ty[esnk[e]] - sy[esrc[e]]
        cost += eflow[e] * math.sqrt(cdx * cdx + cdy * cdy)
    stats = np.empty(5, np.int64)
    stats[0] = n_augs
    stats[1] = stat_settle_s
    stats[2] = stat_settle_t
    stats[3] = stat_tokens
    stats[4] = n_phases
    return status, unmet, cost, pot_s, pot_t, esrc, esnk, eflow, ne, stats


@njit(cache=True)
def _certify(sx, sy, pot_s, tx, ty, pot_t, esrc, esnk, eflow, ne):
    """(max complementary-slackness violation on flow edges,
    max dual-feasibility violation over all pairs)."""
    cs = 0.0
    for e in range(ne):
        if eflow[e] > 0.0:
            cdx = tx[esnk[e]] - sx[esrc[e]]
            cdy = ty[esnk[e]] - sy[esrc[e]]
            c = math.sqrt(cdx * cdx + cdy * cdy)
            v = abs(c + pot_s[esrc[e]] - pot_t[esnk[e]])
            if v > cs:
                cs = v
    dual = 0.0
    for i in range(sx.shape[0]):
        for j in range(tx.shape[0]):
            cdx = tx[j] - sx[i]
            cdy = ty[j] - sy[i]
            v = pot_t[j] - pot_s[i] - math.sqrt(cdx * cdx + cdy * cdy)
            if v > dual:
                dual = v
    return cs, dual


_MULTIGRID_BASE = 1000


def _aggregate_lattice(pos, mass, origin, width):
    """Group atoms by lattice cell: mass-weighted centroids, mass sums, the
    enclosing radius per group, and the member -> group map."""
    k = np.floor((pos - origin) / width).astype(np.int64)
    key = (k[:, 0] << 21) | k[:, 1]
    _, inv = np.unique(key, return_inverse=True)
    msum = np.bincount(inv, weights=mass)
    cx = np.bincount(inv, weights=mass * pos[:, 0]) / msum
    cy = np.bincount(inv, weights=mass * pos[:, 1]) / msum
    rad = np.zeros(msum.shape[0])
    np.maximum.at(rad, inv, np.hypot(pos[:, 0] - cx[inv], pos[:, 1] - cy[inv]))
    return np.column_stack([cx, cy]), msum, rad, inv


def _warm_duals(spos, smass, tpos, tmass, eps, max_augs):
    """Dual-feasible warm start.

    Small instances: pot_s[i] = -dist(i, nearest sink) (triangle inequality).
    Large instances: solve a lattice-coarsened copy recursively and prolong
    its optimal duals with the per-group radius slack
    pot_s[i] = pot^c_s[P(i)] + r_{P(i)},  pot_t[j] = pot^c_t[P(j)] - r_{P(j)},
    which keeps every reduced cost >= its coarse counterpart.
    """
    ns, nt = smass.shape[0], tmass.shape[0]
    if ns + nt <= _MULTIGRID_BASE:
        pot_s = -_nearest_sink_distances(spos[:, 0], spos[:, 1], tpos[:, 0], tpos[:, 1])
        return pot_s, np.zeros(nt)
    allpos = np.vstack([spos, tpos])
    origin = allpos.min(axis=0)
    extent = max(float(np.ptp(allpos[:, 0])), float(np.ptp(allpos[:, 1])), 1e-300)
    width = extent / max(4.0, math.sqrt((ns + nt) / 8.0))
    while True:
        cs_pos, cs_mass, cs_rad, sinv = _aggregate_lattice(spos, smass, origin, width)
        ct_pos, ct_mass, ct_rad, tinv = _aggregate_lattice(tpos, tmass, origin, width)
        if cs_mass.shape[0] + ct_mass.shape[0] <= 0.6 * (ns + nt) or width > extent:
            break
        width *= 2.0
    init_s, init_t = _warm_duals(cs_pos, cs_mass, ct_pos, ct_mass, eps, max_augs)
    status, _, _, pot_s_c, pot_t_c, _, _, _, _, _ = _ssp_solve(
        cs_pos[:, 0], cs_pos[:, 1], cs_mass, ct_pos[:, 0], ct_pos[:, 1], ct_mass,
        init_s, init_t, eps, max_augs,
    )
    if status == 2:
        raise RuntimeError("transport solver exceeded its augmentation budget (coarse level)")
    return pot_s_c[sinv] + cs_rad[sinv], pot_t_c[tinv] - ct_rad[tinv]


def solve_transport(tp: TransportProblem, certify: bool = True) -> float:
    """Exact optimal cost of the balanced transportation problem."""
    spos, smass = tp.source_positions, tp.source_masses
    tpos, tmass = tp.sink_positions, tp.sink_masses
    # Augment from the smaller side: each of its nodes then grows only its
    # own local catchment instead of repeatedly crossing the whole support.
    if smass.shape[0] > tmass.shape[0]:
        spos, smass, tpos, tmass = tpos, tmass, spos, smass
    ns = smass.shape[0]
    nt = tmass.shape[0]
    total = float(np.sum(smass))
    if ns == 0 or nt == 0 or total == 0.0:
        if abs(total - float(np.sum(tmass))) > 0.0:
            raise ValueError("transport problem is infeasible: one empty side")
        return 0.0
    eps = 1e-13 * total
    max_augs = 64 * (ns + nt) + 64
    init_s, init_t = _warm_duals(spos, smass, tpos, tmass, eps, max_augs)
    status, unmet, cost, pot_s, pot_t, esrc, esnk, eflow, ne, stats = _ssp_solve(
        spos[:, 0], spos[:, 1], smass,
        tpos[:, 0], tpos[:, 1], tmass,
        init_s, init_t, eps, max_augs,
    )
    if status == 1 and unmet > 1e-9 * total:
        raise ValueError(
            f"transport problem became infeasible ({unmet:g} unmatched supply)"
        )
    if status == 2:
        raise RuntimeError("transport solver exceeded its augmentation budget")
    solve_transport.last_stats = stats
    if certify:
        scale = 1.0 + float(np.max(np.abs(pot_s), initial=0.0)) + float(
            np.max(np.abs(pot_t), initial=0.0))
        cs, dual = _certify(
            spos[:, 0], spos[:, 1], pot_s,
            tpos[:, 0], tpos[:, 1], pot_t,
            esrc, esnk, eflow, ne,
        )
        if cs > 1e-9 * scale or dual > 1e-9 * scale:
            raise RuntimeError(
                f"transport optimality certificate failed (cs={cs:g}, dual={dual:g})"
            )
    return float(cost)


def _atoms_2d(obj) -> tuple[np.ndarray, np.ndarray, object]:
    if isinstance(obj, DiscreteMeasure2D):
        al = obj.as_atoms()
        return al.positions, al.masses, obj.grid
    if isinstance(obj, AtomList):
        if obj.dim != 2:
            raise ValueError("d1_2d needs 2D atoms")
        return obj.positions, obj.masses, None
    raise TypeError(f"cannot interpret {type(obj).__name__} as a 2D measure")


def d1_2d(mu, nu, threshold: float = ATOM_MASS_THRESHOLD,
          cap: int = DEFAULT_ATOM_CAP) -> float:
    """Exact d1 between two 2D measures.

    Mass co-located in both measures is cancelled first (d1 depends only on
    mu - nu); supports are then thresholded at `threshold` and the combined
    atom count must not exceed `cap`.
    """
    pa, wa, ga = _atoms_2d(mu)
    pb, wb, gb = _atoms_2d(nu)
    ma, mb = float(np.sum(wa)), float(np.sum(wb))
    fa, fb = _balance_factors(ma, mb)
    wa = wa * fa
    wb = wb * fb
    mass_scale = max(ma, mb)

    # Canonical argument order makes d1(mu, nu) == d1(nu, mu) bitwise.
    ka = (pa.shape[0], pa.tobytes(), wa.tobytes())
    kb = (pb.shape[0], pb.tobytes(), wb.tobytes())
    if kb < ka:
        pa, wa, pb, wb = pb, wb, pa, wa

    if ga is not None and ga == gb:
        common = np.minimum(wa, wb)
        wa = wa - common
        wb = wb - common
    else:
        wa, wb = _cancel_colocated(pa, wa, pb, wb)

    keep_a = wa >= threshold
    keep_b = wb >= threshold
    pa, wa = pa[keep_a], wa[keep_a]
    pb, wb = pb[keep_b], wb[keep_b]
    if pa.shape[0] + pb.shape[0] > cap:
        raise ValueError(
            f"transport support {pa.shape[0]} + {pb.shape[0]} exceeds the cap {cap}"
        )
    ra, rb = float(np.sum(wa)), float(np.sum(wb))
    if ra == 0.0 and rb == 0.0:
        return 0.0
    dust = max(ra, rb)
    if min(ra, rb) == 0.0 or dust <= 1e-12 * mass_scale:
        # Everything left is thresholding dust; the distance it could carry
        # is below the certificate tolerance.
        return 0.0
    tp = TransportProblem(pa, wa, pb, wb, mass_scale=mass_scale)
    return solve_transport(tp)


def _cancel_colocated(pa, wa, pb, wb):
    index = {}
    for k in range(pb.shape[0]):
        index.setdefault((pb[k, 0], pb[k, 1]), k)
    wa = wa.copy()
    wb = wb.copy()
    for k in range(pa.shape[0]):
        j = index.get((pa[k, 0], pa[k, 1]))
        if j is not None:
            common = min(wa[k], wb[j])
            wa[k] -= common
            wb[j] -= common
    return wa, wb


# ----------------------------------------------------------------------
# Interaction energy and dissipation
# ----------------------------------------------------------------------

def make_energy_evaluator(potential: Potential, grid, mode: str = "auto"):
    """Callable m -> interaction energy with the value table (and FFT plan for
    large grids) precomputed once."""
    if isinstance(grid, Grid1D):
        table = value_table(potential, grid)
        use_fft = mode == "fft" or (mode == "auto" and grid.n_cells >= 2048)
        conv = FFTConv1D(table, grid.n_cells) if use_fft else None

        def energy(m: DiscreteMeasure1D) -> float:
            rho = m.density
            acc = conv(rho) if conv is not None else dense_conv_1d(table, rho)
            return 0.5 * grid.dx ** 2 * float(np.sum(rho * acc))

        return energy

    table = value_table_2d(potential, grid)
    use_fft = mode == "fft" or (mode == "auto" and min(grid.nx, grid.ny) >= 128)
    conv = FFTConv2D(table, (grid.nx, grid.ny)) if use_fft else None

    def energy2(m: DiscreteMeasure2D) -> float:
        rho = m.density
        acc = conv(rho) if conv is not None else dense_conv_2d(table, rho)
        return 0.5 * grid.cell_area ** 2 * float(np.sum(rho * acc))

    return energy2


def interaction_energy(m, potential: Potential) -> float:
    """Discrete interaction energy (1/2) sum_{i,j} W(x_i - x_j) m_i m_j over
    the cells; the diagonal contributes 0 because W(0) = 0."""
    return make_energy_evaluator(potential, m.grid)(m)


@dataclass(frozen=True)
class EnergyReport:
    """Time series (t, E) recorded along a run."""

    times: np.ndarray
    energies: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.float64)
        e = np.ascontiguousarray(self.energies, dtype=np.float64)
        if t.shape != e.shape or t.ndim != 1:
            raise ValueError("times and energies must be 1D arrays of equal length")
        if t.size and np.any(np.diff(t) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(e)):
            raise ValueError("energies must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "energies", e)

    @property
    def max_positive_increment(self) -> float:
        if self.energies.size < 2:
            return 0.0
        return max(0.0, float(np.max(np.diff(self.energies))))


def dissipation_check(report: EnergyReport, dx: float, dt: float) -> tuple[float, float]:
    """(max positive energy increment, K-hat), with
    K-hat = max(0, max_n (E^{n+1} - E^n)) / (dx * dt)."""
    if dx <= 0.0 or dt <= 0.0:
        raise ValueError("dx and dt must be positive")
    inc = report.max_positive_increment
    return inc, inc / (dx * dt)


def write_energy_csv(report: EnergyReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,E\n")
        for t, e in zip(report.times, report.energies):
            fh.write(f"{t:.17g},{e:.17g}\n")
