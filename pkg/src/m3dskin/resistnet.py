"""Resistor-network model of the sparse conductive stack under compression.

Each sparse conductive band is coarse-grained to an ``n x n`` lattice of
cells joined by in-plane links.  Consecutive conductive bands touch only
through point contacts between vertically aligned cells (filament that
sagged through the insulating band in between).  A contact carries
conductance ``g0 * area / area0``.

Under a force ``F`` the stack strains as ``s_max * (1 - exp(-F / F0))``.
Contacts whose seeded threshold lies below the current strain are active;
their area grows affinely with strain beyond the threshold.  Contacts with a
negative threshold exist at rest.  Both mechanisms only add conductance, so
the terminal resistance never rises with force.  The rise seen on real
sensors below ~25 N is left to the phenomenological ``response`` model.

The two electrodes are equipotential super-nodes; wiring traces hang off
them in series.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .router import DEFAULT_RESISTIVITY, Side, Trace
from .spec_model import BandPlan, BandRole, DesignParams, Pattern

RESIDUAL_TOL = 1e-9


class Disconnected(RuntimeError):
    """The two requested nodes lie in different components."""


@dataclass(frozen=True)
class ResistorNetwork:
    n_nodes: int
    edges: np.ndarray        # (m, 2) int node pairs
    conductance: np.ndarray  # (m,) siemens
    terminals: tuple[int, int] = (0, 1)
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        g = np.asarray(self.conductance, dtype=float).reshape(-1)
        if len(e) != len(g):
            raise ValueError("edges and conductance lengths differ")
        if len(g) and not (np.all(g > 0) and np.all(np.isfinite(g))):
            raise ValueError("conductances must be positive and finite")
        if len(e) and (e.min() < 0 or e.max() >= self.n_nodes):
            raise ValueError("edge refers to a node outside the network")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "conductance", g)

    @classmethod
    def from_resistors(cls, n_nodes: int, resistors: Iterable[tuple[int, int, float]],
                       terminals=(0, 1)) -> "ResistorNetwork":
        rs = list(resistors)
        edges = np.array([(a, b) for a, b, _ in rs], dtype=np.int64).reshape(-1, 2)
        g = np.array([1.0 / r for _, _, r in rs], dtype=float)
        return cls(n_nodes, edges, g, tuple(terminals))

    def with_edge(self, a: int, b: int, g: float) -> "ResistorNetwork":
        return ResistorNetwork(
            self.n_nodes,
            np.vstack([self.edges, [[a, b]]]),
            np.append(self.conductance, g),
            self.terminals,
            self.labels,
        )


def laplacian(net: ResistorNetwork) -> sp.csr_matrix:
    """Weighted graph Laplacian; parallel edges add, self loops vanish."""
    e, g = net.edges, net.conductance
    keep = e[:, 0] != e[:, 1]
    e, g = e[keep], g[keep]
    n = net.n_nodes
    rows = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0], e[:, 0], e[:, 1]])
    vals = np.concatenate([-g, -g, g, g])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def effective_resistance(net: ResistorNetwork, a: int | None = None, b: int | None = None) -> float:
    """Two-terminal resistance between nodes ``a`` and ``b`` (default: the
    network's terminals), from a grounded Laplacian solve."""
    if a is None and b is None:
        a, b = net.terminals
    if a == b:
        raise ValueError("terminals must differ")
    for v in (a, b):
        if not 0 <= v < net.n_nodes:
            raise ValueError(f"node {v} not in network")
    L = laplacian(net)
    _, comp = connected_components(L, directed=False)
    if comp[a] != comp[b]:
        raise Disconnected(f"nodes {a} and {b} are not connected")
    nodes = np.flatnonzero(comp == comp[a])
    sub = L[nodes][:, nodes].tocsc()
    local = {int(v): i for i, v in enumerate(nodes)}
    ia, ib = local[a], local[b]
    keep = np.array([i for i in range(len(nodes)) if i != ib])
    Lg = sub[keep][:, keep].tocsc()
    rhs = np.zeros(len(keep))
    pos_a = int(np.searchsorted(keep, ia))
    rhs[pos_a] = 1.0
    x = np.atleast_1d(spsolve(Lg, rhs))
    for _ in range(3):
        r = rhs - Lg @ x
        if np.linalg.norm(r) <= RESIDUAL_TOL * np.linalg.norm(rhs) * 1e-3:
            break
        x = x + np.atleast_1d(spsolve(Lg, r))
    res = np.linalg.norm(rhs - Lg @ x) / np.linalg.norm(rhs)
    if not res < RESIDUAL_TOL:
        raise ArithmeticError(f"solve residual {res:.2e} above {RESIDUAL_TOL}")
    return float(x[pos_a])


# --- stack model --------------------------------------------------------

# (s_max, F0 [N], g0 [S]) per pattern at 10 % and 15 % density, for the
# baseline two-loop walls.  Calibration constants chosen so the qualitative
# pattern orderings hold: honeycomb barely strains, gyroid saturates by
# ~40 N, the denser 3D honeycomb / cubic variants stretch to higher force.
PATTERN_MECHANICS: dict[Pattern, dict[float, tuple[float, float, float]]] = {
    Pattern.THREE_D_HONEYCOMB: {0.10: (0.50, 60.0, 1.0e-4), 0.15: (0.45, 110.0, 1.2e-4)},
    Pattern.HONEYCOMB: {0.10: (0.12, 80.0, 1.0e-4), 0.15: (0.08, 100.0, 1.2e-4)},
    Pattern.GYROID: {0.10: (0.55, 14.0, 1.0e-4), 0.15: (0.50, 18.0, 1.2e-4)},
    Pattern.CUBIC: {0.10: (0.45, 70.0, 1.0e-4), 0.15: (0.45, 130.0, 1.2e-4)},
    Pattern.GRID: {0.10: (0.35, 50.0, 1.0e-4), 0.15: (0.30, 70.0, 1.2e-4)},
    Pattern.ARCHIMEDEAN_CHORDS: {0.10: (0.35, 45.0, 1.0e-4), 0.15: (0.30, 65.0, 1.2e-4)},
}

DEFAULT_GRID = 8
DEFAULT_REST_FRACTION = 0.15
DEFAULT_AREA0 = 0.16      # mm^2, one bead width squared
DEFAULT_AREA_GROWTH = 0.5  # relative area gain per unit strain
DEFAULT_THRESHOLD_SCALE = 4.0  # strain at which every aligned cell pair would touch


def mechanics_for(pattern: Pattern, density: float, wall_loops: int = 2) -> tuple[float, float, float]:
    """(s_max, F0, g0) interpolated in density and scaled for wall count.

    Walls stiffen the band: F0 scales by ``0.5 + 0.25 * wall_loops``
    (1.0 for the two-loop baseline, 0.5 with no walls).
    """
    table = PATTERN_MECHANICS[pattern]
    d_lo, d_hi = sorted(table)
    t = min(max((density - d_lo) / (d_hi - d_lo), 0.0), 1.0)
    lo, hi = np.array(table[d_lo]), np.array(table[d_hi])
    s_max, f0, g0 = lo + t * (hi - lo)
    return float(s_max), float(f0 * (0.5 + 0.25 * wall_loops)), float(g0)


@dataclass(frozen=True)
class StackModel:
    n_bands: int
    grid: int
    s_max: float
    f0: float
    g0: float
    intra_conductance: float
    electrode_conductance: float
    contact_interface: np.ndarray = field(repr=False)
    contact_cell: np.ndarray = field(repr=False)
    contact_threshold: np.ndarray = field(repr=False)
    area0: float = DEFAULT_AREA0
    area_growth: float = DEFAULT_AREA_GROWTH
    seed: int | None = None

    def __post_init__(self):
        for name in ("contact_interface", "contact_cell", "contact_threshold"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if self.n_bands > 1 and not np.any(self.contact_threshold <= 0):
            raise ValueError("initial contact set is empty; the stack would not conduct at rest")

    @property
    def n_contacts(self) -> int:
        return len(self.contact_threshold)

    def initial_contacts(self) -> np.ndarray:
        return np.flatnonzero(self.contact_threshold <= 0)

    def param_hash(self) -> str:
        h = hashlib.sha256()
        scalars = {
            "n_bands": self.n_bands, "grid": self.grid, "s_max": self.s_max, "f0": self.f0,
            "g0": self.g0, "intra": self.intra_conductance,
            "electrode": repr(self.electrode_conductance), "area0": self.area0,
            "area_growth": self.area_growth, "seed": self.seed,
        }
        h.update(json.dumps(scalars, sort_keys=True).encode())
        for arr in (self.contact_interface, self.contact_cell, self.contact_threshold):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()[:16]


def build_stack_model(
    params: DesignParams,
    *,
    seed: int,
    tile_area: float = 32.0 * 32.0,
    grid: int = DEFAULT_GRID,
    rest_fraction: float = DEFAULT_REST_FRACTION,
    threshold_scale: float = DEFAULT_THRESHOLD_SCALE,
    resistivity: float = DEFAULT_RESISTIVITY,
    plan: BandPlan | None = None,
) -> StackModel:
    """Seeded stack model for one tile.

    Thresholds are ``threshold_scale * (u - rest_fraction) / (1 - rest_fraction)``
    with ``u`` uniform on [0, 1), so about ``rest_fraction`` of aligned cell
    pairs touch at rest.  The scale is a strain shared by all patterns, so a
    stiff pattern (small ``s_max``) closes few new contacts.  Each interface keeps at least its lowest-threshold
    contact closed at rest.
    """
    if seed is None:
        raise ValueError("an explicit seed is required")
    n_bands = plan.count(BandRole.SPARSE_CONDUCTIVE) if plan else params.patterned_conductive_layers
    s_max, f0, g0 = mechanics_for(params.sensor_infill_pattern, params.sensor_infill_density,
                                  params.wall_loops)
    pitch_mm = math.sqrt(tile_area) / grid
    t_m = params.conductive_band_thickness * 1e-3
    rho = params.sensor_infill_density
    intra = t_m * rho / resistivity
    electrode = (pitch_mm * 1e-3) ** 2 * rho / (resistivity * t_m / 2.0)

    rng = np.random.default_rng(seed)
    n_cells = grid * grid
    n_if = max(n_bands - 1, 0)
    u = rng.random((n_if, n_cells))
    theta = threshold_scale * (u - rest_fraction) / (1.0 - rest_fraction)
    for k in range(n_if):
        j = int(np.argmin(theta[k]))
        if theta[k, j] > 0:
            theta[k, j] = 0.0
    iface = np.repeat(np.arange(n_if), n_cells)
    cell = np.tile(np.arange(n_cells), n_if)
    return StackModel(
        n_bands=n_bands,
        grid=grid,
        s_max=s_max,
        f0=f0,
        g0=g0,
        intra_conductance=intra,
        electrode_conductance=electrode,
        contact_interface=iface,
        contact_cell=cell,
        contact_threshold=theta.reshape(-1),
        seed=seed,
    )


@dataclass(frozen=True)
class CompressionState:
    applied_force: float
    strain: float
    area: np.ndarray          # per contact, 0 where inactive (mm^2)
    new_contacts: np.ndarray  # indices active now but not at rest

    @property
    def active(self) -> np.ndarray:
        return self.area > 0

    @property
    def contact_count(self) -> int:
        return int(np.count_nonzero(self.area))


def strain_at(model: StackModel, force: float) -> float:
    return model.s_max * (1.0 - math.exp(-force / model.f0))


def compress(model: StackModel, force: float) -> CompressionState:
    if force < 0:
        raise ValueError(f"force must be >= 0, got {force}")
    s = strain_at(model, force)
    th = model.contact_threshold
    active = th <= s
    onset = np.maximum(th, 0.0)
    area = np.where(active, model.area0 * (1.0 + model.area_growth * (s - onset)), 0.0)
    new = np.flatnonzero(active & (th > 0))
    return CompressionState(float(force), s, area, new)


def _wiring_resistances(wiring) -> dict[Side, float]:
    out: dict[Side, float] = {}
    for w in wiring or ():
        if isinstance(w, Trace):
            out[w.net.side] = out.get(w.net.side, 0.0) + w.estimated_resistance
        else:
            side, r = w
            out[Side(side)] = out.get(Side(side), 0.0) + float(r)
    return out


def build_network(model: StackModel, state: CompressionState, wiring: Sequence = ()) -> ResistorNetwork:
    """Network for one compression state.

    Node 0 is the bottom electrode, node 1 the top electrode, then lattice
    cells band by band.  Wiring (``Trace`` objects or ``(Side, ohms)``
    pairs) adds a terminal node behind each electrode.  Infinite electrode
    conductance merges the outer bands' cells into their electrode.
    """
    n, N = model.grid, model.n_bands
    n_cells = n * n
    cell_node = lambda band, c: 2 + band * n_cells + c
    n_nodes = 2 + N * n_cells
    edges: list[np.ndarray] = []
    gs: list[np.ndarray] = []

    # in-plane lattice links
    idx = np.arange(n_cells).reshape(n, n)
    pairs = np.vstack([
        np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()]),
        np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()]),
    ])
    for band in range(N):
        if len(pairs):
            edges.append(pairs + cell_node(band, 0))
            gs.append(np.full(len(pairs), model.intra_conductance))

    # electrode couplings
    ideal = math.isinf(model.electrode_conductance)
    merge = np.arange(n_nodes)
    if N:
        cells = np.arange(n_cells)
        for elec, band in ((0, 0), (1, N - 1)):
            if ideal:
                merge[cell_node(band, cells)] = elec
            else:
                edges.append(np.column_stack([np.full(n_cells, elec), cell_node(band, cells)]))
                gs.append(np.full(n_cells, model.electrode_conductance))
        if N == 1 and ideal:
            raise ValueError("a single band with ideal electrodes shorts the terminals")

    # inter-band contacts
    act = state.area > 0
    if np.any(act):
        k = model.contact_interface[act]
        c = model.contact_cell[act]
        edges.append(np.column_stack([cell_node(k, c), cell_node(k + 1, c)]))
        gs.append(model.g0 * state.area[act] / model.area0)

    e = np.vstack(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    g = np.concatenate(gs) if gs else np.zeros(0)
    e = merge[e]
    keep = e[:, 0] != e[:, 1]
    e, g = e[keep], g[keep]

    # compact node numbering after merging
    used = np.unique(np.concatenate([[0, 1], e.ravel()]))
    remap = -np.ones(n_nodes, dtype=np.int64)
    remap[used] = np.arange(len(used))
    e = remap[e]
    n_live = len(used)
    a, b = 0, 1

    wires = _wiring_resistances(wiring)
    extra_e, extra_g = [], []
    if Side.BOTTOM in wires:
        extra_e.append((0, n_live))
        extra_g.append(1.0 / wires[Side.BOTTOM])
        a = n_live
        n_live += 1
    if Side.TOP in wires:
        extra_e.append((1, n_live))
        extra_g.append(1.0 / wires[Side.TOP])
        b = n_live
        n_live += 1
    if extra_e:
        e = np.vstack([e, np.array(extra_e, dtype=np.int64)])
        g = np.concatenate([g, extra_g])

    net = ResistorNetwork(n_live, e, g, (a, b))
    _, comp = connected_components(laplacian(net), directed=False)
    if comp[a] != comp[b]:
        raise Disconnected("terminals are not connected; the model has no contacts at rest")
    return net


def sweep_force(model: StackModel, wiring: Sequence, forces: Sequence[float],
                workers: int | None = None) -> list[tuple[float, float]]:
    """Terminal resistance at each force (ascending).

    Points are independent; ``workers > 1`` evaluates them on a thread pool
    sharing the read-only model.  Results do not depend on ``workers``.
    """
    forces = [float(f) for f in forces]
    if any(b < a for a, b in zip(forces, forces[1:])):
        raise ValueError("forces must be sorted ascending")

    def point(f: float) -> tuple[float, float]:
        return f, effective_resistance(build_network(model, compress(model, f), wiring))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, forces))
    return [point(f) for f in forces]


def sensor_resistance(model: StackModel, force: float = 0.0) -> float:
    """Sensor-layer resistance alone (ideal wiring)."""
    return effective_resistance(build_network(model, compress(model, force)))


def write_sweep_csv(rows: Sequence[tuple[float, float]], model: StackModel, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["force_N", "resistance_ohm", "seed", "model_hash"])
    h = model.param_hash()
    for f, r in rows:
        w.writerow([f"{f:.6g}", f"{r:.6f}", model.seed, h])


def sweep_csv(rows: Sequence[tuple[float, float]], model: StackModel) -> str:
    buf = io.StringIO()
    write_sweep_csv(rows, model, buf)
    return buf.getvalue()
