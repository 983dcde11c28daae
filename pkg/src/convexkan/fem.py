"""Plane-strain finite elements on linear triangles.

Covers the full data pipeline: built-in meshers for the training and
validation specimens, Dirichlet partitions with reaction-force groups,
internal-force assembly, Newton solves with load stepping, and synthetic
full-field dataset generation with optional displacement noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DataError, InadmissibleDeformationError, SolverError
from .mechanics import MaterialModel

Array = npt.NDArray[np.float64]

_EDGE_TOL = 1e-9


@dataclass
class Mesh:
    """Triangulated plane-strain domain.

    ``nodes`` are reference coordinates (n_n, 2); ``triangles`` are 0-based
    node index triples (n_el, 3).  Negatively oriented triangles are repaired
    by swapping two vertices.  Shape-function gradients are constant per
    element (single barycenter quadrature point).
    """

    nodes: Array
    triangles: npt.NDArray[np.int64]
    area: Array = field(init=False, repr=False)
    grad_N: Array = field(init=False, repr=False)  # (n_el, 3, 2)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise DataError(f"nodes must be (n_n, 2), got {self.nodes.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise DataError(f"triangles must be (n_el, 3), got {self.triangles.shape}")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= self.n_nodes
        ):
            raise DataError("triangle node index out of range")
        self._setup_geometry()

    def _setup_geometry(self):
        def signed_area(tris):
            X = self.nodes[tris]  # (n_el, 3, 2)
            u, v = X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]
            return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

        signed = signed_area(self.triangles)
        flipped = signed < 0.0
        if np.any(flipped):
            self.triangles[flipped] = self.triangles[flipped][:, [0, 2, 1]]
            signed = signed_area(self.triangles)
        X = self.nodes[self.triangles]
        if np.any(signed <= 0.0):
            raise DataError("degenerate (zero-area) triangle in mesh")
        self.area = signed
        # gradient of the barycentric shape function N^a: rotate the opposite
        # edge by 90 degrees and scale by 1/(2A)
        e0 = X[:, 2] - X[:, 1]
        e1 = X[:, 0] - X[:, 2]
        e2 = X[:, 1] - X[:, 0]
        g = np.stack([e0, e1, e2], axis=1)  # (n_el, 3, 2) edge vectors
        grad = np.empty_like(g)
        grad[:, :, 0] = -g[:, :, 1]
        grad[:, :, 1] = g[:, :, 0]
        self.grad_N = grad / (2.0 * self.area)[:, None, None]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    def dumps(self) -> str:
        lines = [f"nodes {self.n_nodes} triangles {self.n_elements}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.nodes]
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Mesh":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DataError("empty mesh file")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
            raise DataError(f"bad mesh header: {lines[0]!r}")
        try:
            n_n, n_el = int(head[1]), int(head[3])
            if len(lines) != 1 + n_n + n_el:
                raise DataError(
                    f"mesh file has {len(lines) - 1} body lines, expected {n_n + n_el}"
                )
            nodes = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + n_n]])
            tris = np.array(
                [[int(v) for v in ln.split()] for ln in lines[1 + n_n :]], dtype=np.int64
            )
        except ValueError as exc:
            raise DataError(f"malformed mesh file: {exc}") from None
        return cls(nodes=nodes, triangles=tris)

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path) as fh:
            return cls.loads(fh.read())


def _grid_triangulation(n: int):
    """Structured 2-triangles-per-cell split of an n x n node grid on [0,1]^2."""
    xs = np.linspace(0.0, 1.0, n)
    nodes = np.column_stack([np.repeat(xs, n), np.tile(xs, n)])  # row-major in x
    tris = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = (i + 1) * n + j
            # alternate the diagonal to avoid a preferred shear direction
            if (i + j) % 2 == 0:
                tris.append((a, b, b + 1))
                tris.append((a, b + 1, a + 1))
            else:
                tris.append((a, b, a + 1))
                tris.append((b, b + 1, a + 1))
    return nodes, np.array(tris, dtype=np.int64)


def _cut_hole(nodes, tris, inside, project):
    """Remove nodes flagged inside, snap the surviving rim via ``project``,
    drop dangling triangles, and compact node numbering."""
    keep_tri = ~np.any(inside[tris], axis=1)
    tris = tris[keep_tri]
    used = np.zeros(nodes.shape[0], dtype=bool)
    used[tris] = True
    remap = -np.ones(nodes.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.sum())
    nodes = project(nodes.copy(), used)
    return nodes[used], remap[tris]


def unit_square_hole_mesh(n: int = 21, radius: float = 0.2) -> Mesh:
    """Training specimen: unit square with a quarter-circle hole of the given
    radius at the bottom-left corner, structured triangulation (~n^2 nodes)."""
    if n < 5:
        raise ConfigurationError(f"mesh resolution n must be >= 5, got {n}")
    if not 0.0 < radius < 0.5:
        raise ConfigurationError(f"hole radius must lie in (0, 0.5), got {radius}")
    nodes, tris = _grid_triangulation(n)
    h = 1.0 / (n - 1)
    r = np.hypot(nodes[:, 0], nodes[:, 1])
    inside = r < radius - 0.5 * h

    def project(nd, used):
        rr = np.hypot(nd[:, 0], nd[:, 1])
        snap = used & (rr < radius + 0.35 * h)
        origin = snap & (rr < 1e-12)
        nd[origin] = radius / np.sqrt(2.0)
        move = snap & ~origin
        nd[move] *= (radius / rr[move])[:, None]
        return nd

    nodes, tris = _cut_hole(nodes, tris, inside, project)
    mesh = Mesh(nodes=nodes, triangles=tris)
    if mesh.area.min() < 1e-3 * h * h:
        raise ConfigurationError("hole cut produced a near-degenerate element")
    return mesh


def two_hole_mesh(n: int = 25) -> Mesh:
    """Validation specimen: unit square with two asymmetric elliptical holes,
    used only for cross-geometry validation solves."""
    if n < 9:
        raise ConfigurationError(f"mesh resolution n must be >= 9, got {n}")
    nodes, tris = _grid_triangulation(n)
    h = 1.0 / (n - 1)
    # (center, semi-axes) of the two holes
    ellipses = (((0.30, 0.68), (0.16, 0.09)), ((0.72, 0.28), (0.10, 0.17)))

    for (cx, cy), (ax, ay) in ellipses:
        # normalized elliptical radius: 1 on the hole boundary
        def rho(nd):
            return np.hypot((nd[:, 0] - cx) / ax, (nd[:, 1] - cy) / ay)

        band = 0.5 * h / min(ax, ay)
        inside = rho(nodes) < 1.0 - band

        def project(nd, used, cx=cx, cy=cy, ax=ax, ay=ay, band=band):
            rr = np.hypot((nd[:, 0] - cx) / ax, (nd[:, 1] - cy) / ay)
            snap = used & (rr < 1.0 + 0.7 * band) & (rr > 1e-12)
            s = (1.0 / rr[snap])[:, None]
            nd[snap] = [cx, cy] + ([ax, ay] * ((nd[snap] - [cx, cy]) / [ax, ay]) * s)
            return nd

        nodes, tris = _cut_hole(nodes, tris, inside, project)
    mesh = Mesh(nodes=nodes, triangles=tris)
    if mesh.area.min() < 1e-3 * h * h:
        raise ConfigurationError("hole cut produced a near-degenerate element")
    return mesh


@dataclass(frozen=True)
class FixedGroup:
    """One Dirichlet constraint group tied to a single measured reaction.

    All DOFs in the group carry the prescribed value ``scale * delta``.
    """

    name: str
    dofs: npt.NDArray[np.int64]  # (m, 2) rows of (node, component)
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "dofs", np.asarray(self.dofs, dtype=np.int64).reshape(-1, 2))
        if self.dofs.shape[0] == 0:
            raise ConfigurationError(f"fixed group {self.name!r} has no DOFs")


@dataclass(frozen=True)
class DofPartition:
    """Split of the (node, component) DOFs into free DOFs and disjoint fixed
    groups, each fixed group reporting one reaction force."""

    n_nodes: int
    groups: tuple[FixedGroup, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        seen = set()
        for g in self.groups:
            if g.dofs[:, 0].min() < 0 or g.dofs[:, 0].max() >= self.n_nodes:
                raise ConfigurationError(f"group {g.name!r} references unknown node")
            if not np.all((g.dofs[:, 1] >= 0) & (g.dofs[:, 1] <= 1)):
                raise ConfigurationError(f"group {g.name!r} has a bad component index")
            for node, comp in g.dofs:
                key = (int(node), int(comp))
                if key in seen:
                    raise ConfigurationError(
                        f"DOF {key} appears in more than one fixed group"
                    )
                seen.add(key)

    @property
    def n_reactions(self) -> int:
        return len(self.groups)

    def fixed_mask(self) -> npt.NDArray[np.bool_]:
        mask = np.zeros((self.n_nodes, 2), dtype=bool)
        for g in self.groups:
            mask[g.dofs[:, 0], g.dofs[:, 1]] = True
        return mask

    def free_flat_indices(self) -> npt.NDArray[np.int64]:
        """Flattened indices (2*node + comp) of the unconstrained DOFs."""
        return np.flatnonzero(~self.fixed_mask().ravel())

    def prescribed(self, delta: float) -> Array:
        """Displacement field carrying the Dirichlet values, zero elsewhere."""
        u = np.zeros((self.n_nodes, 2))
        for g in self.groups:
            u[g.dofs[:, 0], g.dofs[:, 1]] = g.scale * delta
        return u


def _edge_nodes(mesh: Mesh, comp: int, value: float) -> Array:
    idx = np.flatnonzero(np.abs(mesh.nodes[:, comp] - value) < _EDGE_TOL)
    if idx.size == 0:
        raise ConfigurationError(f"no nodes found on boundary x_{comp} = {value}")
    return idx


def _group(name, nodes, comp, scale) -> FixedGroup:
    dofs = np.column_stack([nodes, np.full(nodes.size, comp, dtype=np.int64)])
    return FixedGroup(name=name, dofs=dofs, scale=scale)


def biaxial_partition(mesh: Mesh) -> DofPartition:
    """Asymmetric biaxial tension on the unit square: symmetry on the left
    (u_x = 0) and bottom (u_y = 0), pulled right edge u_x = delta and top edge
    u_y = delta / 2.  Four reaction groups."""
    return DofPartition(
        n_nodes=mesh.n_nodes,
        groups=(
            _group("left", _edge_nodes(mesh, 0, 0.0), 0, 0.0),
            _group("bottom", _edge_nodes(mesh, 1, 0.0), 1, 0.0),
            _group("right", _edge_nodes(mesh, 0, 1.0), 0, 1.0),
            _group("top", _edge_nodes(mesh, 1, 1.0), 1, 0.5),
        ),
    )


def uniaxial_partition(mesh: Mesh) -> DofPartition:
    """Displacement-controlled uniaxial tension: bottom edge held (u_y = 0),
    top edge pulled to u_y = delta, with the bottom edge also pinned laterally
    to remove the rigid x-translation."""
    bottom = _edge_nodes(mesh, 1, 0.0)
    return DofPartition(
        n_nodes=mesh.n_nodes,
        groups=(
            _group("bottom", bottom, 1, 0.0),
            _group("top", _edge_nodes(mesh, 1, 1.0), 1, 1.0),
            _group("pin", bottom, 0, 0.0),
        ),
    )


def element_deformation_gradient(mesh: Mesh, u, e: int) -> Array:
    """F = I + sum_a u^a (x) grad N^a on element e (constant over the element)."""
    u = np.asarray(u, dtype=np.float64)
    tri = mesh.triangles[e]
    return np.eye(2) + u[tri].T @ mesh.grad_N[e]


def deformation_gradients(mesh: Mesh, u) -> Array:
    """Per-element deformation gradients, shape (n_el, 2, 2)."""
    u = np.asarray(u, dtype=np.float64)
    return np.eye(2) + np.einsum("eai,eaj->eij", u[mesh.triangles], mesh.grad_N)


def _element_stresses(mesh: Mesh, u, model: MaterialModel) -> Array:
    Fs = deformation_gradients(mesh, u)
    P = np.empty_like(Fs)
    for e in range(mesh.n_elements):
        try:
            P[e] = model.stress(Fs[e])
        except InadmissibleDeformationError as exc:
            raise InadmissibleDeformationError(
                f"element {e}: {exc}"
            ) from exc
    return P


def nodal_forces(mesh: Mesh, u, model: MaterialModel) -> Array:
    """Internal nodal force array f_i^a, shape (n_n, 2).

    Single barycenter quadrature: f^a = sum_e area_e P(F_e) grad N^a.  The
    displacement-controlled benchmarks carry no applied tractions, so this is
    the complete weak-form residual.
    """
    P = _element_stresses(mesh, u, model)
    return scatter_forces(mesh, P)


def scatter_forces(mesh: Mesh, P: Array) -> Array:
    """Assemble nodal forces from per-element first Piola-Kirchhoff stresses."""
    contrib = mesh.area[:, None, None] * np.einsum("eij,eaj->eai", P, mesh.grad_N)
    f = np.zeros((mesh.n_nodes, 2))
    np.add.at(f, mesh.triangles, contrib)
    return f


def reaction(partition: DofPartition, f: Array) -> Array:
    """Per-group reaction forces: sum of nodal forces over each fixed group."""
    return np.array([f[g.dofs[:, 0], g.dofs[:, 1]].sum() for g in partition.groups])


def tangent_matrix(mesh: Mesh, u, model: MaterialModel) -> sp.csr_matrix:
    """Assembled tangent stiffness over all 2*n_n DOFs (sparse)."""
    Fs = deformation_gradients(mesh, u)
    n_el = mesh.n_elements
    Ke = np.empty((n_el, 6, 6))
    for e in range(n_el):
        C = model.tangent(Fs[e])  # (2,2,2,2)
        G = mesh.grad_N[e]  # (3,2)
        blk = mesh.area[e] * np.einsum("ijkl,aj,bl->aibk", C, G, G)
        Ke[e] = blk.reshape(6, 6)
    dof = (2 * mesh.triangles[:, :, None] + np.arange(2)[None, None, :]).reshape(n_el, 6)
    rows = np.repeat(dof, 6, axis=1).ravel()
    cols = np.tile(dof, (1, 6)).ravel()
    n_dof = 2 * mesh.n_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n_dof, n_dof))
    return K.tocsr()


def _newton(mesh, partition, model, u, tol, max_iter):
    """Newton iteration at fixed prescribed values already written into u.

    Returns (u, residual history).  Raises SolverError on stagnation.
    """
    free = partition.free_flat_indices()
    history = []
    for _ in range(max_iter):
        f = nodal_forces(mesh, u, model)
        res = np.abs(f.ravel()[free]).max() if free.size else 0.0
        history.append(res)
        scale = 1.0 + np.linalg.norm(reaction(partition, f))
        if res < tol * scale:
            return u, history
        K = tangent_matrix(mesh, u, model)[np.ix_(free, free)]
        try:
            du = spla.spsolve(K.tocsc(), -f.ravel()[free])
        except RuntimeError as exc:
            raise SolverError(f"singular tangent stiffness: {exc}", residual=res)
        if not np.all(np.isfinite(du)):
            raise SolverError("singular tangent stiffness", residual=res)
        uf = u.ravel().copy()
        uf[free] += du
        u = uf.reshape(-1, 2)
    raise SolverError(
        f"Newton did not converge in {max_iter} iterations", residual=history[-1]
    )


def solve(
    mesh: Mesh,
    partition: DofPartition,
    model: MaterialModel,
    delta: float,
    steps: int = 1,
    u0: Array | None = None,
    tol: float = 1e-9,
    max_iter: int = 25,
    max_halvings: int = 4,
    return_residuals: bool = False,
):
    """Quasi-static solve at load parameter ``delta``.

    Applies the load in uniform increments (``steps``), halving an increment
    up to ``max_halvings`` times when Newton fails to converge.  Returns the
    nodal displacement array, plus the final Newton residual history when
    ``return_residuals`` is set.
    """
    if steps < 1:
        raise ConfigurationError(f"need at least one load step, got {steps}")
    fixed = partition.fixed_mask()
    u = np.zeros((mesh.n_nodes, 2)) if u0 is None else np.array(u0, dtype=np.float64)
    reached = 0.0
    inc = delta / steps if delta != 0.0 else 0.0
    history = []
    while True:
        remaining = delta - reached
        if abs(remaining) <= 1e-15 * (1.0 + abs(delta)):
            break
        if inc == 0.0 or abs(inc) > abs(remaining):
            inc = remaining
        halvings = 0
        while True:
            target = reached + inc
            trial = u.copy()
            trial[fixed] = partition.prescribed(target)[fixed]
            try:
                u, history = _newton(mesh, partition, model, trial, tol, max_iter)
                reached = target
                break
            except (SolverError, InadmissibleDeformationError) as exc:
                halvings += 1
                if halvings > max_halvings:
                    raise SolverError(
                        f"load step to delta={target:g} failed after "
                        f"{max_halvings} halvings: {exc}",
                        residual=getattr(exc, "residual", None),
                    ) from exc
                inc *= 0.5
    if delta == 0.0:
        # still verify equilibrium of the start state (one residual check)
        u, history = _newton(mesh, partition, model, u, tol, max_iter)
    return (u, history) if return_residuals else u


@dataclass
class SpecimenDataset:
    """Full-field snapshots for one specimen: mesh, Dirichlet partition, one
    displacement field and one reaction vector per load parameter value."""

    mesh: Mesh
    partition: DofPartition
    deltas: Array  # (n_t,)
    displacements: Array  # (n_t, n_n, 2)
    reactions: Array  # (n_t, n_beta)
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.deltas = np.atleast_1d(np.asarray(self.deltas, dtype=np.float64))
        self.displacements = np.asarray(self.displacements, dtype=np.float64)
        self.reactions = np.asarray(self.reactions, dtype=np.float64)
        n_t = self.deltas.size
        if self.displacements.shape != (n_t, self.mesh.n_nodes, 2):
            raise DataError(
                f"displacements shape {self.displacements.shape} does not match "
                f"{n_t} snapshots on {self.mesh.n_nodes} nodes"
            )
        if self.reactions.shape != (n_t, self.partition.n_reactions):
            raise DataError(
                f"reactions shape {self.reactions.shape} does not match "
                f"{n_t} snapshots with {self.partition.n_reactions} groups"
            )
        if not np.all(np.isfinite(self.displacements)):
            raise DataError("non-finite displacement in dataset")

    @property
    def n_snapshots(self) -> int:
        return self.deltas.size

    def dumps(self) -> str:
        out = ["convexkan-dataset v1", f"noise_sigma {self.noise_sigma:.17g}"]
        out.append(self.mesh.dumps().rstrip("\n"))
        out.append(f"partition groups {self.partition.n_reactions}")
        for g in self.partition.groups:
            out.append(f"group {g.name} scale {g.scale:.17g} dofs {g.dofs.shape[0]}")
            out += [f"{a} {i}" for a, i in g.dofs]
        out.append(f"snapshots {self.n_snapshots}")
        for t in range(self.n_snapshots):
            out.append(f"snapshot delta {self.deltas[t]:.17g}")
            out += [f"{x:.17g} {y:.17g}" for x, y in self.displacements[t]]
            out.append("reactions " + " ".join(f"{r:.17g}" for r in self.reactions[t]))
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "SpecimenDataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != "convexkan-dataset v1":
            raise DataError("not a dataset file (bad header)")
        try:
            pos = 1
            assert lines[pos].startswith("noise_sigma ")
            sigma = float(lines[pos].split()[1])
            pos += 1
            head = lines[pos].split()
            n_n, n_el = int(head[1]), int(head[3])
            mesh = Mesh.loads("\n".join(lines[pos : pos + 1 + n_n + n_el]))
            pos += 1 + n_n + n_el
            head = lines[pos].split()
            assert head[:2] == ["partition", "groups"]
            n_beta = int(head[2])
            pos += 1
            groups = []
            for _ in range(n_beta):
                head = lines[pos].split()
                assert head[0] == "group" and head[2] == "scale" and head[4] == "dofs"
                name, scale, m = head[1], float(head[3]), int(head[5])
                pos += 1
                dofs = np.array(
                    [[int(v) for v in ln.split()] for ln in lines[pos : pos + m]],
                    dtype=np.int64,
                )
                pos += m
                groups.append(FixedGroup(name=name, dofs=dofs, scale=scale))
            head = lines[pos].split()
            assert head[0] == "snapshots"
            n_t = int(head[1])
            pos += 1
            deltas = np.empty(n_t)
            disp = np.empty((n_t, n_n, 2))
            reac = np.empty((n_t, n_beta))
            for t in range(n_t):
                head = lines[pos].split()
                assert head[:2] == ["snapshot", "delta"]
                deltas[t] = float(head[2])
                pos += 1
                disp[t] = [[float(v) for v in ln.split()] for ln in lines[pos : pos + n_n]]
                pos += n_n
                head = lines[pos].split()
                assert head[0] == "reactions" and len(head) == 1 + n_beta
                reac[t] = [float(v) for v in head[1:]]
                pos += 1
            assert pos == len(lines)
        except (AssertionError, IndexError, ValueError) as exc:
            raise DataError(f"malformed dataset file: {exc}") from None
        partition = DofPartition(n_nodes=n_n, groups=tuple(groups))
        return cls(
            mesh=mesh,
            partition=partition,
            deltas=deltas,
            displacements=disp,
            reactions=reac,
            noise_sigma=sigma,
        )

    @classmethod
    def load(cls, path) -> "SpecimenDataset":
        with open(path) as fh:
            return cls.loads(fh.read())


def generate_dataset(
    mesh: Mesh,
    partition: DofPartition,
    model: MaterialModel,
    deltas,
    noise_sigma: float = 0.0,
    seed: int = 0,
    noise_per_dof_constant: bool = False,
    steps_per_snapshot: int = 1,
) -> SpecimenDataset:
    """Run ground-truth forward solves over a load schedule and package the
    (optionally noisy) displacement fields with the noiseless reactions.

    Snapshots are solved by continuation: each solve starts from the previous
    converged field.  Noise is one independent normal draw per displacement
    DOF per snapshot; with ``noise_per_dof_constant`` a single per-DOF draw is
    reused across all snapshots.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
    n_t = deltas.size
    disp = np.empty((n_t, mesh.n_nodes, 2))
    reac = np.empty((n_t, partition.n_reactions))
    u = np.zeros((mesh.n_nodes, 2))
    for t in range(n_t):
        u = solve(mesh, partition, model, deltas[t], steps=steps_per_snapshot, u0=u)
        disp[t] = u
        reac[t] = reaction(partition, nodal_forces(mesh, u, model))
    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        if noise_per_dof_constant:
            disp += rng.normal(0.0, noise_sigma, size=(1, mesh.n_nodes, 2))
        else:
            disp += rng.normal(0.0, noise_sigma, size=disp.shape)
    return SpecimenDataset(
        mesh=mesh,
        partition=partition,
        deltas=deltas,
        displacements=disp,
        reactions=reac,
        noise_sigma=noise_sigma,
    )
