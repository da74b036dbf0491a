"""Mesoscale direct-bundle kinematics.

Fiber bundles are chains of straight segments advected through a prescribed
plug-flow velocity field. The module generates stacks at a target volume
fraction, finds fluid-cell neighbors with a spatial tree, evaluates
Gaussian-weighted relative velocities, hydrodynamic drag/lift forces and
their reaction body-force field on a cell grid, lubricated contact stresses,
and measures ensemble orientation tensors.

The body-force field is diagnostic output: the velocity field is prescribed,
there is no feedback into a flow solve.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .orientation import OrientationTensor2


@dataclass
class BundleChain:
    """Chain of straight truss segments along one fiber bundle."""

    nodes: np.ndarray            # (n, 3) positions, m
    radius: float                # equivalent segment radius, m
    area: float = 0.03e-6        # cross section, m^2
    rest_length: float = 2.5e-3  # segment rest length, m
    modulus: float = 72e9        # axial stiffness, Pa (metadata only)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[0] < 2 or nodes.shape[1] != 3:
            raise ValueError("chain needs at least two 3D nodes")
        self.nodes = nodes

    def segment_vectors(self):
        return self.nodes[1:] - self.nodes[:-1]

    def segment_lengths(self):
        return np.linalg.norm(self.segment_vectors(), axis=1)

    def segment_midpoints(self):
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    def length(self):
        return float(self.segment_lengths().sum())


def generate_stack(extent, vf_target, bundle_length=25e-3, seed=0,
                   segment_length=2.5e-3, area=0.03e-6, max_iter=10_000_000):
    """Random stack of planar-isotropic bundles at a target volume fraction.

    Bundle midpoints are uniform in the box, in-plane angles uniform on
    [0, pi). Chains are clipped to the box; clipped end pieces shorter than
    half a rest length are dropped. Generation stops once the in-box bundle
    volume reaches vf_target * box volume (tolerance one bundle, well inside
    +/-0.005 for practical boxes). Deterministic for a given seed.
    """
    lx, ly, lz = (float(e) for e in extent)
    if min(lx, ly, lz) <= 0:
        raise ValueError("box extents must be positive")
    if vf_target < 0 or vf_target >= 0.5:
        raise ValueError("volume fraction target must lie in [0, 0.5)")
    if vf_target == 0:
        return []

    radius = float(np.sqrt(area / np.pi))
    box_volume = lx * ly * lz
    target_volume = vf_target * box_volume
    if bundle_length * area > 0.005 * box_volume:
        raise ValueError("box too small to meet the volume tolerance")

    rng = np.random.default_rng(seed)
    chains = []
    volume = 0.0
    for _ in range(max_iter):
        if volume >= target_volume:
            break
        mid = rng.random(3) * (lx, ly, lz)
        angle = rng.random() * np.pi
        direction = np.array([np.cos(angle), np.sin(angle), 0.0])
        chain = _clipped_chain(mid, direction, bundle_length, segment_length,
                               (lx, ly, lz), radius, area)
        if chain is None:
            continue
        chains.append(chain)
        volume += chain.length() * area
    else:
        raise RuntimeError("volume fraction target unreachable within cap")
    return chains


def _clipped_chain(mid, direction, length, seg_len, extent, radius, area):
    """Mesh the in-box part of a straight bundle; None if nothing remains."""
    half = length / 2.0
    # parameter interval of the centerline kept inside the box
    t0, t1 = -half, half
    for axis in range(3):
        d = direction[axis]
        if abs(d) < 1e-15:
            if not 0.0 <= mid[axis] <= extent[axis]:
                return None
            continue
        ta = (0.0 - mid[axis]) / d
        tb = (extent[axis] - mid[axis]) / d
        lo, hi = min(ta, tb), max(ta, tb)
        t0, t1 = max(t0, lo), min(t1, hi)
    if t1 - t0 < 0.5 * seg_len:
        return None
    # whole segments plus a clipped remainder at the downstream end
    n_full = int(np.floor((t1 - t0) / seg_len + 1e-12))
    ts = t0 + seg_len * np.arange(n_full + 1)
    if t1 - ts[-1] >= 0.5 * seg_len:
        ts = np.append(ts, t1)
    if ts.size < 2:
        return None
    nodes = mid[None, :] + ts[:, None] * direction[None, :]
    return BundleChain(nodes=nodes, radius=radius, area=area,
                       rest_length=seg_len)


# ---------------------------------------------------------------------------
# Spatial index

class NeighborIndex:
    """Fixed-radius neighbor search over a static point set.

    Backed by a kd-tree (build O(n log n), query O(log n + k)); query(x, L)
    returns exactly the ids with ||x_i - x|| < L, duplicates included.
    """

    def __init__(self, points, radius=2.5e-3):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("index needs (n, 3) points")
        self.radius = float(radius)
        self._tree = cKDTree(self.points)

    def query(self, x, L=None):
        """Sorted id array of all points strictly within L of x."""
        L = self.radius if L is None else float(L)
        if L <= 0:
            return np.empty(0, dtype=int)
        ids = self._tree.query_ball_point(np.asarray(x, dtype=float), L)
        ids = np.asarray(ids, dtype=int)
        if ids.size:
            d = np.linalg.norm(self.points[ids] - x, axis=1)
            ids = ids[d < L]   # tree query is inclusive, contract is strict
        return np.sort(ids)

    def query_many(self, xs, L=None):
        L = self.radius if L is None else float(L)
        return [self.query(x, L) for x in np.asarray(xs, dtype=float)]


def radius_query(index, x, L):
    """Module-level convenience for NeighborIndex.query."""
    return index.query(x, L)


# ---------------------------------------------------------------------------
# Euler grid and coupling forces

@dataclass
class EulerGrid:
    """Axis-aligned cell lattice carrying fluid velocity and body force."""

    origin: np.ndarray            # (3,) lower corner, m
    spacing: np.ndarray           # (3,) cell size, m
    shape: tuple                  # (nx, ny, nz)
    centers: np.ndarray = field(init=False)
    velocity: np.ndarray = field(init=False)
    body_force: np.ndarray = field(init=False)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        if np.any(self.spacing <= 0):
            raise ValueError("cell spacing must be positive")
        nx, ny, nz = self.shape
        ix, iy, iz = np.meshgrid(
            np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
        )
        idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])
        self.centers = self.origin + (idx + 0.5) * self.spacing
        self.velocity = np.zeros_like(self.centers)
        self.body_force = np.zeros_like(self.centers)

    @classmethod
    def cover(cls, lower, upper, cell):
        """Smallest lattice of cubic cells covering [lower, upper]."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = np.maximum(1, np.ceil((upper - lower) / cell - 1e-12).astype(int))
        return cls(origin=lower, spacing=np.full(3, float(cell)),
                   shape=tuple(n))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def n_cells(self):
        return self.centers.shape[0]

    def sample_velocity(self, velocity_field, t=0.0):
        self.velocity = np.asarray(velocity_field(self.centers, t), dtype=float)

    def reset_body_force(self):
        self.body_force = np.zeros_like(self.centers)


@dataclass(frozen=True)
class DragCoefficients:
    """Drag/lift factors of the segment force law.

    Calibration against resolved micro-simulations is an external input; the
    defaults keep pure Stokes drag active and the lift dormant.
    """

    k_d: float = 1.0
    k_l: float = 0.0

    def __post_init__(self):
        if self.k_d <= 0:
            raise ValueError("drag factor must be positive")
        if self.k_l < 0:
            raise ValueError("lift factor must be non-negative")


def relative_velocity(x_seg, v_seg, neighbor_xyz, neighbor_v, sigma):
    """Gaussian-weighted fluid velocity seen by a segment, minus its own.

    Returns (dv, weights); the normalized weights sum to one and are reused
    for the reaction body-force scatter. With no neighbors the relative
    velocity is zero (callers count those cases as a diagnostic).
    """
    neighbor_xyz = np.asarray(neighbor_xyz, dtype=float)
    neighbor_v = np.asarray(neighbor_v, dtype=float)
    if neighbor_xyz.size == 0:
        return np.zeros(3), np.empty(0)
    d2 = np.sum((neighbor_xyz - x_seg) ** 2, axis=1)
    w = np.exp(-d2 / (2.0 * sigma ** 2))
    w /= w.sum()
    dv = w @ (neighbor_v - v_seg)
    return dv, w


def hydrodynamic_force(eta, R, coeffs, dv, axis):
    """Drag plus lift force on one segment, F = 6 pi eta R (kd dv + kl |dv| q).

    q is the unit rejection of dv from the segment axis; when dv is parallel
    to the axis the rejection is undefined and the lift contribution is zero,
    keeping the force continuous in dv.
    """
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValueError("segment axis must be a unit vector")
    dv = np.asarray(dv, dtype=float)
    force = coeffs.k_d * dv
    speed = np.linalg.norm(dv)
    if coeffs.k_l > 0.0 and speed > 0.0:
        rej = dv - (dv @ axis) * axis
        rej_norm = np.linalg.norm(rej)
        if rej_norm >= 1e-12 * speed:
            force = force + coeffs.k_l * speed * (rej / rej_norm)
    return 6.0 * np.pi * eta * R * force


def accumulate_body_force(forces, scatter, grid, workers=1):
    """Reaction body-force field from segment forces.

    scatter[j] is the (cell_ids, normalized_weights) pair produced for
    segment j by relative_velocity. Each segment deposits
    -w/V * F onto its cells; per-worker partial fields are merged in a fixed
    order so the result is bit-identical for a given worker count and agrees
    across worker counts to summation roundoff. The global reaction balance
    sum(f * V) = -sum(F) holds because the weights are normalized.
    """
    forces = np.asarray(forces, dtype=float)
    n_seg = forces.shape[0]
    if len(scatter) != n_seg:
        raise ValueError("one (ids, weights) entry per segment is required")
    vol = grid.cell_volume
    workers = max(1, int(workers))
    bounds = np.linspace(0, n_seg, workers + 1).astype(int)

    def block(lo, hi):
        f = np.zeros_like(grid.body_force)
        for j in range(lo, hi):
            ids, w = scatter[j]
            if len(ids) == 0:
                continue
            np.add.at(f, np.asarray(ids, dtype=int),
                      -np.outer(w, forces[j]) / vol)
        return f

    if workers == 1:
        partials = [block(bounds[0], bounds[1])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(block, bounds[i], bounds[i + 1])
                for i in range(workers)
            ]
            partials = [f.result() for f in futures]
    total = grid.body_force
    for f in partials:   # fixed merge order keeps results deterministic
        total = total + f
    grid.body_force = total
    return grid


def contact_stress(eta, d_a, phi, dv_t, g, A, cap=1e6, g_min=1e-6):
    """Tangential lubrication stress between two crossing bundles.

    sigma = -eta * d_a^2 / |sin phi| * dv_t / (max(g, g_min) * A), with the
    magnitude clamped to cap so grazing contacts (phi -> 0) stay bounded.
    """
    if g <= 0:
        raise ValueError("contact gap must be positive")
    if A <= 0:
        raise ValueError("contact area must be positive")
    dv_t = np.asarray(dv_t, dtype=float)
    sin_phi = abs(np.sin(phi))
    gap = max(g, g_min)
    if sin_phi < 1e-12:
        scale = np.inf
    else:
        scale = eta * d_a ** 2 / (sin_phi * gap * A)
    stress = -scale * dv_t
    mag = np.linalg.norm(stress)
    if not np.isfinite(mag) or mag > cap:
        direction = -dv_t
        nrm = np.linalg.norm(direction)
        if nrm == 0.0:
            return np.zeros(3)
        stress = cap * direction / nrm
    return stress


# ---------------------------------------------------------------------------
# Advection and measurement

def advect(chains, velocity_field, dt, t=0.0, domain=None):
    """Advance chain nodes through the velocity field by explicit midpoint.

    Segments move as material lines. Nodes leaving the optional domain box
    (lower, upper) are clamped to it; the number of clamped nodes is
    returned alongside the chains.
    """
    if not chains:
        return chains, 0
    counts = [c.nodes.shape[0] for c in chains]
    stacked = np.concatenate([c.nodes for c in chains], axis=0)
    v1 = np.asarray(velocity_field(stacked, t), dtype=float)
    mid = stacked + 0.5 * dt * v1
    v2 = np.asarray(velocity_field(mid, t + 0.5 * dt), dtype=float)
    new = stacked + dt * v2
    clamped = 0
    if domain is not None:
        lower, upper = (np.asarray(b, dtype=float) for b in domain)
        inside = np.clip(new, lower, upper)
        clamped = int(np.sum(np.any(inside != new, axis=1)))
        new = inside
    out = []
    offset = 0
    for chain, n in zip(chains, counts):
        out.append(
            BundleChain(
                nodes=new[offset:offset + n].copy(),
                radius=chain.radius,
                area=chain.area,
                rest_length=chain.rest_length,
                modulus=chain.modulus,
            )
        )
        offset += n
    return out, clamped


def measure_orientation(chains, region=None):
    """Length-weighted second-order orientation tensor of segments in region.

    region is an optional (lower, upper) box filter on segment midpoints.
    """
    total = np.zeros((3, 3))
    weight = 0.0
    for chain in chains:
        vecs = chain.segment_vectors()
        lens = np.linalg.norm(vecs, axis=1)
        keep = lens > 0
        if region is not None:
            lower, upper = (np.asarray(b, dtype=float) for b in region)
            mids = chain.segment_midpoints()
            keep &= np.all((mids >= lower) & (mids <= upper), axis=1)
        if not np.any(keep):
            continue
        p = vecs[keep] / lens[keep, None]
        total += np.einsum("s,si,sj->ij", lens[keep], p, p)
        weight += lens[keep].sum()
    if weight == 0.0:
        raise ValueError("no segments inside the measurement region")
    return OrientationTensor2(total / weight)


# ---------------------------------------------------------------------------
# Prescribed-kinematics fields and run driver

def elongation_field(dxx):
    """Affine planar elongation with matching thickness compression."""

    def field_fn(x, t):
        x = np.asarray(x, dtype=float)
        v = np.zeros_like(x)
        v[..., 0] = dxx * x[..., 0]
        v[..., 2] = -dxx * x[..., 2]
        return v

    return field_fn


def gap_drive_field(h0, hdot, x_front0):
    """Plug-flow field of an incompressible closing gap.

    v_x = -(hdot/h) x, v_z = hdot z / h with h = h0 + hdot t; mirrors the
    macroscale kinematics for full-slip squeeze flow.
    """

    def field_fn(x, t):
        h = h0 + hdot * t
        if h <= 0:
            raise ValueError("gap closed completely")
        x = np.asarray(x, dtype=float)
        v = np.zeros_like(x)
        v[..., 0] = -(hdot / h) * x[..., 0]
        v[..., 2] = (hdot / h) * x[..., 2]
        return v

    return field_fn


@dataclass
class BundleRunResult:
    times: np.ndarray
    axx: np.ndarray
    ayy: np.ndarray
    azz: np.ndarray
    chains: list
    grid: EulerGrid
    forces: np.ndarray          # (n_segments, 3) at the final step
    no_neighbor_count: int
    clamped_nodes: int


def run_bundles(chains, velocity_field, t_end, dt, grid, eta,
                coeffs=DragCoefficients(), sigma=None, search_radius=None,
                workers=1, domain=None):
    """Advect a stack through a prescribed field, with force diagnostics.

    Per step the grid samples the field, segments query their neighbor cells
    (tree rebuilt only if the grid moved, which it does not here), the
    hydrodynamic forces and their reaction body-force field are accumulated,
    and the chains advance. Returns the ensemble orientation history.
    """
    search_radius = (
        chains[0].rest_length if (search_radius is None and chains)
        else (search_radius or 2.5e-3)
    )
    sigma = search_radius / 2.0 if sigma is None else float(sigma)
    index = NeighborIndex(grid.centers, radius=search_radius)
    n_steps = max(1, int(round(t_end / dt)))
    times = [0.0]
    a0 = measure_orientation(chains).A
    axx, ayy, azz = [a0[0, 0]], [a0[1, 1]], [a0[2, 2]]
    no_neighbors = 0
    clamped_total = 0
    forces = np.zeros((0, 3))

    for step in range(n_steps):
        t = step * dt
        grid.sample_velocity(velocity_field, t)
        mids, axes, vels = _segment_state(chains, velocity_field, t)
        forces = np.zeros((mids.shape[0], 3))
        scatter = []
        for j in range(mids.shape[0]):
            ids = index.query(mids[j], search_radius)
            if ids.size == 0:
                no_neighbors += 1
                scatter.append((ids, np.empty(0)))
                continue
            dv, w = relative_velocity(
                mids[j], vels[j], index.points[ids], grid.velocity[ids], sigma
            )
            forces[j] = hydrodynamic_force(eta, chains[0].radius, coeffs, dv,
                                           axes[j])
            scatter.append((ids, w))
        grid.reset_body_force()
        accumulate_body_force(forces, scatter, grid, workers=workers)
        chains, clamped = advect(chains, velocity_field, dt, t, domain=domain)
        clamped_total += clamped
        a = measure_orientation(chains).A
        times.append((step + 1) * dt)
        axx.append(a[0, 0])
        ayy.append(a[1, 1])
        azz.append(a[2, 2])

    return BundleRunResult(
        times=np.asarray(times),
        axx=np.asarray(axx),
        ayy=np.asarray(ayy),
        azz=np.asarray(azz),
        chains=chains,
        grid=grid,
        forces=forces,
        no_neighbor_count=no_neighbors,
        clamped_nodes=clamped_total,
    )


def _segment_state(chains, velocity_field, t):
    mids = np.concatenate([c.segment_midpoints() for c in chains], axis=0)
    vecs = np.concatenate([c.segment_vectors() for c in chains], axis=0)
    lens = np.linalg.norm(vecs, axis=1)
    axes = vecs / lens[:, None]
    # segments ride the prescribed field: their velocity is the field value
    vels = np.asarray(velocity_field(mids, t), dtype=float)
    return mids, axes, vels


def export_chains_csv(path, chains):
    """Bundle snapshot as (chain, node, x, y, z) rows."""
    from .io import write_csv

    chain_col, node_col, xs, ys, zs = [], [], [], [], []
    for ci, chain in enumerate(chains):
        for ni, node in enumerate(chain.nodes):
            chain_col.append(ci)
            node_col.append(ni)
            xs.append(node[0])
            ys.append(node[1])
            zs.append(node[2])
    write_csv(path, ["chain", "node", "x_m", "y_m", "z_m"],
              [chain_col, node_col, xs, ys, zs])


def export_body_force_csv(path, grid):
    from .io import write_csv

    write_csv(
        path,
        ["x_m", "y_m", "z_m", "fx_N_m3", "fy_N_m3", "fz_N_m3"],
        [grid.centers[:, 0], grid.centers[:, 1], grid.centers[:, 2],
         grid.body_force[:, 0], grid.body_force[:, 1], grid.body_force[:, 2]],
    )
