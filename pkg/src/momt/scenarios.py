"""Scenario configuration and the experiment runner.

A scenario file is flat ``key = value`` text with sections (INI syntax,
chosen for diffability).  It describes a spatial estimation experiment:
grids, an optional velocity-augmented dynamic model, sensor arrays,
source trajectories, and solver parameters.  Three kinds are supported:

* ``tracking``       - one array observed at several times; chain cost.
* ``fusion``         - several arrays observed once; star (barycenter) cost.
* ``barycenter_tracking`` - several arrays at several times; star-chain cost.

``run_scenario`` simulates snapshots with the *true* (possibly rotated)
array geometry, solves the measurement-constrained transport problem with
the *nominal* geometry, and writes plot-ready CSV/JSON artifacts.  All
outputs are deterministic for a fixed (config, seed) pair; wall-clock
timing goes into a separate file so the data artifacts stay byte-stable.

Schema (see ``configs/`` for complete examples)::

    [scenario]  kind, seed, times, snapshots, snr_db
    [space]     axes = lo:hi:n, ...         one per spatial dimension
                velocity = lo:hi:n, ...     required iff cost model = dynamic
    [cost]      model = static | dynamic, epsilon, gamma, alpha
    [solver]    outer_tol, max_sweeps, inner_tol, max_newton
    [array.N]   model = farfield_ula | nearfield, wavelength,
                sensors + spacing (ULA)  or  positions = "x y; x y; ..."
                rotation_deg (nearfield only; applied to the true geometry)
    [source.N]  power, track = "x y; x y; ..." (one waypoint per time, or one)
    [output]    interp, peaks, min_separation
"""

from __future__ import annotations

import configparser
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import LinearSystem, interpolate_plan, push_forward_matrix, static_system
from .graphs import CentralGraph, SequentialGraph, StarChainGraph
from .grids import Grid
from .kernels import KernelOperator, build_kernel, squared_distance_cost
from .partial_info import MeasurementConstraint, solve
from .peaks import associate_tracks, peak_extract
from .projections import brute_force_project, project_marginal, project_pair
from .spectral import (SensorArray, gamma_matrix, mvdr_spectrum, sample_covariance,
                       simulate_snapshots, ula)

KINDS = ("tracking", "fusion", "barycenter_tracking")
MAX_PAIR_ENTRIES = 40_000_000


class ConfigError(Exception):
    """Configuration problem(s); ``errors`` lists field-level messages."""

    def __init__(self, errors):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ArraySpec:
    model: str
    wavelength: float
    sensors: int = 0
    spacing: float = 0.0
    positions: np.ndarray | None = None
    rotation_deg: float = 0.0

    def nominal(self) -> SensorArray:
        if self.model == "farfield_ula":
            return ula(self.sensors, self.spacing, self.wavelength)
        return SensorArray(self.positions, self.wavelength, "nearfield")

    def true(self) -> SensorArray:
        arr = self.nominal()
        if self.rotation_deg != 0.0:
            arr = arr.rotated(self.rotation_deg)
        return arr


@dataclass
class SourceSpec:
    power: float
    track: np.ndarray  # (times, d) waypoints

    def at(self, t: int) -> np.ndarray:
        return self.track[min(t, len(self.track) - 1)]


@dataclass
class Scenario:
    kind: str
    seed: int
    times: int
    snapshots: int
    snr_db: float
    space_axes: list[tuple[float, float, int]]
    velocity_axes: list[tuple[float, float, int]] | None
    cost_model: str
    epsilon: float
    gamma: float
    alpha: float
    arrays: list[ArraySpec]
    sources: list[SourceSpec]
    outer_tol: float = 1e-7
    max_sweeps: int = 2000
    inner_tol: float = 1e-10
    max_newton: int = 50
    interp: int = 0
    peaks_k: int = 2
    min_separation: int = 3

    @property
    def ndim(self) -> int:
        return len(self.space_axes)

    @property
    def dynamic(self) -> bool:
        return self.cost_model == "dynamic"

    def spatial_grid(self) -> Grid:
        return Grid(tuple(self.space_axes))

    def state_grid(self) -> Grid:
        if not self.dynamic:
            return self.spatial_grid()
        axes = []
        for s, v in zip(self.space_axes, self.velocity_axes):
            axes += [s, v]
        return Grid(tuple(axes))

    def state_axis_names(self) -> list[str]:
        if not self.dynamic:
            return [f"x{i+1}" for i in range(self.ndim)]
        out = []
        for i in range(self.ndim):
            out += [f"x{i+1}", f"v{i+1}"]
        return out

    def system(self) -> LinearSystem:
        if not self.dynamic:
            return static_system(self.ndim)
        d = self.ndim
        A = np.zeros((2 * d, 2 * d))
        B = np.zeros((2 * d, d))
        F = np.zeros((d, 2 * d))
        for i in range(d):
            A[2 * i, 2 * i + 1] = 1.0
            B[2 * i + 1, i] = 1.0
            F[i, 2 * i] = 1.0
        return LinearSystem(A, B, F)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _parse_axes(text: str, where: str, errors: list) -> list[tuple[float, float, int]]:
    out = []
    for part in text.split(","):
        bits = part.strip().split(":")
        try:
            lo, hi, n = float(bits[0]), float(bits[1]), int(bits[2])
            if n < 1 or (n > 1 and not lo < hi):
                raise ValueError
            out.append((lo, hi, n))
        except (ValueError, IndexError):
            errors.append(f"{where}: expected 'lo:hi:count', got {part.strip()!r}")
    return out


def _parse_points(text: str, where: str, errors: list) -> np.ndarray:
    rows = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            rows.append([float(x) for x in part.split()])
        except ValueError:
            errors.append(f"{where}: bad point {part!r}")
            return np.zeros((0, 1))
    if not rows or len({len(r) for r in rows}) != 1:
        errors.append(f"{where}: needs ';'-separated points of equal dimension")
        return np.zeros((0, 1))
    return np.asarray(rows)


def _get(cfg, section, key, cast, default=None, errors=None, required=False):
    if not cfg.has_option(section, key):
        if required:
            errors.append(f"[{section}] {key}: required")
        return default
    raw = cfg.get(section, key)
    try:
        if cast is float and raw.strip().lower() in ("inf", "+inf", "infinity"):
            return np.inf
        return cast(raw)
    except ValueError:
        errors.append(f"[{section}] {key}: cannot parse {raw!r} as {cast.__name__}")
        return default


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; raises :class:`ConfigError`."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = configparser.ConfigParser()
    try:
        cfg.read(path)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from err
    errors: list[str] = []

    kind = _get(cfg, "scenario", "kind", str, errors=errors, required=True)
    if kind is not None and kind not in KINDS:
        errors.append(f"[scenario] kind: must be one of {', '.join(KINDS)}, got {kind!r}")
    seed = _get(cfg, "scenario", "seed", int, default=0, errors=errors)
    times = _get(cfg, "scenario", "times", int, default=1, errors=errors)
    snapshots = _get(cfg, "scenario", "snapshots", int, default=100, errors=errors)
    snr_db = _get(cfg, "scenario", "snr_db", float, default=20.0, errors=errors)

    if not cfg.has_section("space") or not cfg.has_option("space", "axes"):
        errors.append("[space] axes: required")
        space_axes = []
    else:
        space_axes = _parse_axes(cfg.get("space", "axes"), "[space] axes", errors)
    velocity_axes = None
    if cfg.has_option("space", "velocity"):
        velocity_axes = _parse_axes(cfg.get("space", "velocity"), "[space] velocity",
                                    errors)

    cost_model = _get(cfg, "cost", "model", str, default="static", errors=errors)
    if cost_model not in ("static", "dynamic"):
        errors.append(f"[cost] model: must be static or dynamic, got {cost_model!r}")
    epsilon = _get(cfg, "cost", "epsilon", float, errors=errors, required=True)
    gamma = _get(cfg, "cost", "gamma", float, errors=errors, required=True)
    alpha = _get(cfg, "cost", "alpha", float, default=1.0, errors=errors)
    if epsilon is not None and not epsilon > 0:
        errors.append(f"[cost] epsilon: must be positive, got {epsilon}")
    if gamma is not None and not gamma > 0:
        errors.append(f"[cost] gamma: must be positive or inf, got {gamma}")
    if alpha is not None and not alpha > 0:
        errors.append(f"[cost] alpha: must be positive, got {alpha}")

    arrays = []
    for section in sorted(s for s in cfg.sections() if s.startswith("array")):
        model = _get(cfg, section, "model", str, default="farfield_ula", errors=errors)
        wavelength = _get(cfg, section, "wavelength", float, errors=errors, required=True)
        rot = _get(cfg, section, "rotation_deg", float, default=0.0, errors=errors)
        spec = ArraySpec(model=model, wavelength=wavelength or 1.0, rotation_deg=rot)
        if model == "farfield_ula":
            spec.sensors = _get(cfg, section, "sensors", int, errors=errors, required=True) or 1
            spec.spacing = _get(cfg, section, "spacing", float, errors=errors, required=True) or 0.5
            if rot:
                errors.append(f"[{section}] rotation_deg: only supported for nearfield arrays")
        elif model == "nearfield":
            if cfg.has_option(section, "positions"):
                spec.positions = _parse_points(cfg.get(section, "positions"),
                                               f"[{section}] positions", errors)
            else:
                errors.append(f"[{section}] positions: required for nearfield arrays")
        else:
            errors.append(f"[{section}] model: unknown array model {model!r}")
        arrays.append(spec)
    if not arrays:
        errors.append("[array.*]: at least one array section is required")

    sources = []
    for section in sorted(s for s in cfg.sections() if s.startswith("source")):
        power = _get(cfg, section, "power", float, default=1.0, errors=errors)
        if not cfg.has_option(section, "track"):
            errors.append(f"[{section}] track: required")
            continue
        track = _parse_points(cfg.get(section, "track"), f"[{section}] track", errors)
        sources.append(SourceSpec(power=power, track=track))
    if not sources:
        errors.append("[source.*]: at least one source section is required")

    scn = Scenario(
        kind=kind or "tracking", seed=seed, times=times, snapshots=snapshots,
        snr_db=snr_db, space_axes=space_axes, velocity_axes=velocity_axes,
        cost_model=cost_model or "static", epsilon=epsilon or 1.0, gamma=gamma or 1.0,
        alpha=alpha or 1.0, arrays=arrays, sources=sources,
        outer_tol=_get(cfg, "solver", "outer_tol", float, default=1e-7, errors=errors),
        max_sweeps=_get(cfg, "solver", "max_sweeps", int, default=2000, errors=errors),
        inner_tol=_get(cfg, "solver", "inner_tol", float, default=1e-10, errors=errors),
        max_newton=_get(cfg, "solver", "max_newton", int, default=50, errors=errors),
        interp=_get(cfg, "output", "interp", int, default=0, errors=errors),
        peaks_k=_get(cfg, "output", "peaks", int, default=2, errors=errors),
        min_separation=_get(cfg, "output", "min_separation", int, default=3,
                            errors=errors),
    )
    _validate(scn, errors)
    if errors:
        raise ConfigError(errors)
    return scn


def _validate(scn: Scenario, errors: list):
    d = scn.ndim
    if scn.times < 1:
        errors.append(f"[scenario] times: must be >= 1, got {scn.times}")
    if scn.snapshots < 1:
        errors.append(f"[scenario] snapshots: must be >= 1, got {scn.snapshots}")
    if scn.kind == "fusion" and scn.times != 1:
        errors.append("[scenario] times: fusion uses a single observation time")
    if scn.kind == "barycenter_tracking" and scn.times < 2:
        errors.append("[scenario] times: barycenter_tracking needs times >= 2")
    if scn.kind == "tracking" and len(scn.arrays) != 1:
        errors.append("[array.*]: tracking uses exactly one array "
                      "(use barycenter_tracking for several)")
    if scn.dynamic:
        if scn.velocity_axes is None:
            errors.append("[space] velocity: required for the dynamic cost model")
        elif len(scn.velocity_axes) != d:
            errors.append(f"[space] velocity: need {d} axes to match space, "
                          f"got {len(scn.velocity_axes)}")
    for k, a in enumerate(scn.arrays, start=1):
        if a.model == "farfield_ula":
            if d != 1:
                errors.append(f"[array.{k}]: farfield_ula needs a 1-D space "
                              f"(angle), got {d} axes")
            if a.sensors < 1:
                errors.append(f"[array.{k}] sensors: must be >= 1")
        elif a.positions is not None and a.positions.size:
            if a.positions.shape[1] != d:
                errors.append(f"[array.{k}] positions: dimension "
                              f"{a.positions.shape[1]} does not match the {d}-D space")
    for k, s in enumerate(scn.sources, start=1):
        if s.track.size and s.track.shape[1] != d:
            errors.append(f"[source.{k}] track: waypoints have dimension "
                          f"{s.track.shape[1]}, space has {d}")
        if len(s.track) not in (1, scn.times):
            errors.append(f"[source.{k}] track: needs 1 or {scn.times} waypoints, "
                          f"got {len(s.track)}")
    if scn.interp < 0:
        errors.append("[output] interp: must be >= 0")
    if scn.interp > 0:
        n = scn.state_grid().size if not errors else 0
        if n and n * n > MAX_PAIR_ENTRIES:
            errors.append(
                f"[output] interp: pairwise couplings on a {n}-point grid would "
                f"hold {n*n} entries; reduce the grid or disable interpolation")


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------

def _compose_kernels(ops: list[KernelOperator], epsilon: float) -> KernelOperator:
    """Kronecker composition of per-axis-group kernels into one operator."""
    if len(ops) == 1:
        return ops[0]
    factors, costs = [], []
    shift = 0.0
    for op in ops:
        shift += op.shift
        if op.is_factored:
            factors.extend(op.factors)
            costs.extend(op.cost)
        else:
            factors.append(op.matrix)
            costs.append(op.cost)
    return KernelOperator(factors=factors, epsilon=epsilon, shift=shift, cost=costs)


def chain_kernel(scn: Scenario) -> KernelOperator:
    """Transport kernel between consecutive state marginals."""
    if not scn.dynamic:
        blocks = []
        for lo, hi, n in scn.space_axes:
            g = Grid(((lo, hi, n),))
            blocks.append(build_kernel(squared_distance_cost(g, g), scn.epsilon))
        return _compose_kernels(blocks, scn.epsilon)
    block_sys = LinearSystem([[0, 1], [0, 0]], [[0], [1]], [[1, 0]])
    blocks = []
    for s_ax, v_ax in zip(scn.space_axes, scn.velocity_axes):
        g = Grid((s_ax, v_ax))
        from .dynamics import lq_cost
        blocks.append(build_kernel(lq_cost(block_sys, g, g), scn.epsilon))
    return _compose_kernels(blocks, scn.epsilon)


def leaf_kernel(scn: Scenario) -> KernelOperator:
    """Kernel of the weighted static cost from the state grid to the spatial grid."""
    blocks = []
    for i, (lo, hi, n) in enumerate(scn.space_axes):
        g = Grid(((lo, hi, n),))
        C = scn.alpha * squared_distance_cost(g, g)
        blocks.append(KernelOperator(matrix=np.exp(-C / scn.epsilon),
                                     epsilon=scn.epsilon, cost=C))
        if scn.dynamic:
            nv = scn.velocity_axes[i][2]
            blocks.append(KernelOperator(matrix=np.ones((nv, 1)), epsilon=scn.epsilon,
                                         cost=np.zeros((nv, 1))))
    return _compose_kernels(blocks, scn.epsilon)


@dataclass
class Problem:
    scenario: Scenario
    graph: object
    constraints: dict
    marginal_grids: dict          # marginal index -> Grid
    marginal_labels: dict         # marginal index -> artifact label
    push: object | None           # observation splatting matrix (dynamic only)
    state_grid: Grid
    spatial_grid: Grid
    covariances: dict = field(default_factory=dict)  # (t, array) -> measurement


def measure(scn: Scenario, seed: int | None = None) -> dict:
    """Simulated stacked covariance measurements, keyed by (time, array)."""
    rng = np.random.default_rng(scn.seed if seed is None else seed)
    true_arrays = [a.true() for a in scn.arrays]
    out = {}
    for t in range(scn.times):
        sub_seed = int(rng.integers(0, 2**63 - 1))
        sources = [(s.at(t), s.power) for s in scn.sources]
        snaps = simulate_snapshots(true_arrays, sources, scn.snr_db, scn.snapshots,
                                   seed=sub_seed)
        snaps = [snaps] if isinstance(snaps, np.ndarray) else snaps
        for j, Y in enumerate(snaps):
            out[(t, j)] = sample_covariance(Y)
    return out


def build_problem(scn: Scenario, seed: int | None = None) -> Problem:
    """Assemble graph, constraints, and measurement data for a scenario."""
    spatial = scn.spatial_grid()
    state = scn.state_grid()
    covs = measure(scn, seed)
    nominal = [a.nominal() for a in scn.arrays]

    if scn.kind == "tracking":
        push = None
        if scn.dynamic:
            push = push_forward_matrix(scn.system(), state, spatial)
            G = gamma_matrix(nominal[0], spatial, push=push)
        else:
            G = gamma_matrix(nominal[0], spatial)
        T = scn.times - 1
        if T == 0:
            # single-observation fit: couple to a size-1 dummy marginal at
            # zero cost, which leaves the constrained marginal free-standing
            dummy = KernelOperator(matrix=np.ones((state.size, 1)), epsilon=scn.epsilon,
                                   cost=np.zeros((state.size, 1)))
            graph = SequentialGraph([dummy])
        else:
            graph = SequentialGraph(chain_kernel(scn), steps=T)
        constraints = {t: MeasurementConstraint(G=G, r=covs[(t, 0)].r, gamma=scn.gamma)
                       for t in range(scn.times)}
        grids = {t: state for t in range(scn.times)}
        labels = {t: f"t{t}" for t in range(scn.times)}
        if T == 0:
            grids[1] = Grid(((0.0, 0.0, 1),))
            labels[1] = "dummy"
        return Problem(scn, graph, constraints, grids, labels, push, state, spatial,
                       covs)

    if scn.kind == "fusion":
        J = len(scn.arrays)
        graph = CentralGraph(chain_kernel(scn), leaves=J)
        constraints = {}
        for j in range(1, J + 1):
            G = gamma_matrix(nominal[j - 1], spatial)
            constraints[j] = MeasurementConstraint(G=G, r=covs[(0, j - 1)].r,
                                                   gamma=scn.gamma)
        grids = {j: spatial for j in range(J + 1)}
        labels = {0: "barycenter", **{j: f"array{j}" for j in range(1, J + 1)}}
        return Problem(scn, graph, constraints, grids, labels, None, spatial, spatial,
                       covs)

    # barycenter tracking
    J = len(scn.arrays)
    T = scn.times - 1
    push = push_forward_matrix(scn.system(), state, spatial) if scn.dynamic else None
    graph = StarChainGraph(chain_kernel(scn), steps=T, leaves=J,
                           leaf_kernel=leaf_kernel(scn), alpha=scn.alpha)
    constraints = {}
    grids = {}
    labels = {}
    gammas_G = [gamma_matrix(nominal[j], spatial) for j in range(J)]
    for t in range(scn.times):
        grids[(t, 0)] = state
        labels[(t, 0)] = f"bary_t{t}"
        for j in range(1, J + 1):
            constraints[(t, j)] = MeasurementConstraint(
                G=gammas_G[j - 1], r=covs[(t, j - 1)].r, gamma=scn.gamma)
            grids[(t, j)] = spatial
            labels[(t, j)] = f"t{t}_array{j}"
    return Problem(scn, graph, constraints, grids, labels, push, state, spatial, covs)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _write_csv(path: Path, grid: Grid, names: list[str], mass: np.ndarray):
    pts = grid.points()
    with open(path, "w") as fh:
        fh.write(",".join(names + ["mass"]) + "\n")
        for row, m in zip(pts, mass):
            cells = [f"{x:.17g}" for x in row] + [f"{m:.17g}"]
            fh.write(",".join(cells) + "\n")


def _axis_cells(grid: Grid) -> np.ndarray:
    return np.array([grid.spacing(a) if grid.axes[a][2] > 1 else 1.0
                     for a in range(grid.ndim)])


def run_scenario(config_path, out_dir, baseline: bool = False,
                 interp: int | None = None, seed: int | None = None) -> int:
    """Run one scenario end to end; returns the process exit status.

    Writes per-marginal spectra (CSV), observed/interpolated spectra where
    applicable, peak tracks (JSON), a solver report (JSON), optional MVDR
    baselines, and a gnuplot script.  Returns 0 on success, 3 when the
    solver failed to converge (the report is still written).
    """
    scn = load_scenario(config_path)
    if seed is not None:
        scn.seed = int(seed)
    if interp is not None:
        scn.interp = int(interp)
        errors: list[str] = []
        _validate(scn, errors)
        if errors:
            raise ConfigError(errors)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    problem = build_problem(scn)
    lam, u, report = solve(problem.graph, problem.constraints, epsilon=scn.epsilon,
                           outer_tol=scn.outer_tol, max_sweeps=scn.max_sweeps,
                           inner_tol=scn.inner_tol, max_newton=scn.max_newton)
    wall = time.perf_counter() - t0

    state_names = scn.state_axis_names()
    spatial_names = [f"x{i+1}" for i in range(scn.ndim)]
    marginals = {}
    for idx in problem.graph.marginal_indices():
        label = problem.marginal_labels[idx]
        if label == "dummy":
            continue
        phi = project_marginal(problem.graph, u, idx)
        marginals[idx] = phi
        grid = problem.marginal_grids[idx]
        names = state_names if grid is problem.state_grid else spatial_names
        _write_csv(out / f"marginal_{label}.csv", grid, names, phi)
        if problem.push is not None and grid is problem.state_grid:
            _write_csv(out / f"observed_{label}.csv", problem.spatial_grid,
                       spatial_names, problem.push @ phi)

    peaks_doc = {}
    track_indices = _tracked_indices(problem)
    peak_sets = []
    for idx in track_indices:
        label = problem.marginal_labels[idx]
        grid = problem.marginal_grids[idx]
        found = peak_extract(marginals[idx], grid, scn.peaks_k, scn.min_separation)
        peaks_doc[label] = [{"point": [float(x) for x in pt], "mass": m}
                            for pt, m in found]
        peak_sets.append(np.array([pt for pt, _ in found]))
    if len(track_indices) > 1 and all(len(p) for p in peak_sets):
        grid = problem.marginal_grids[track_indices[0]]
        tracks = associate_tracks(peak_sets, _axis_cells(grid))
        peaks_doc["tracks"] = [[[float(x) for x in pt] for pt in tr] for tr in tracks]
    with open(out / "peaks.json", "w") as fh:
        json.dump(peaks_doc, fh, indent=2, sort_keys=True)

    if scn.interp > 0 and len(track_indices) > 1:
        _write_interpolations(problem, u, out, track_indices, state_names)

    if baseline:
        _write_baseline(problem, out, spatial_names)

    rep_doc = {
        "kind": scn.kind,
        "seed": scn.seed,
        "epsilon": scn.epsilon,
        "gamma": "inf" if np.isinf(scn.gamma) else scn.gamma,
        "converged": report.converged,
        "sweeps": report.iterations,
        "residual_history": report.residual_history,
        "objective_history": report.objective_history,
        "newton_history": report.newton_history,
        "final_residuals": {str(problem.marginal_labels[k]): v
                            for k, v in report.final_residuals.items()},
        "message": report.message,
    }
    with open(out / "report.json", "w") as fh:
        json.dump(rep_doc, fh, indent=2, sort_keys=True)
    with open(out / "timing.txt", "w") as fh:
        fh.write(f"wall_seconds = {wall:.3f}\n")
    _write_gnuplot(problem, out)
    return 0 if report.converged else 3


def _tracked_indices(problem: Problem) -> list:
    scn = problem.scenario
    if scn.kind == "tracking":
        return list(range(scn.times))
    if scn.kind == "fusion":
        return [0]
    return [(t, 0) for t in range(scn.times)]


def _write_interpolations(problem: Problem, u, out: Path, track_indices, names):
    scn = problem.scenario
    sys = scn.system()
    grid = problem.state_grid
    taus = [(i + 1) / (scn.interp + 1) for i in range(scn.interp)]
    for a, b in zip(track_indices[:-1], track_indices[1:]):
        plan = project_pair(problem.graph, u, a, b)
        for i, tau in enumerate(taus):
            phi, oob = interpolate_plan(plan, grid, grid, sys, tau, grid)
            label = problem.marginal_labels[a]
            _write_csv(out / f"interp_{label}_{i+1}.csv", grid, names, phi)
            if problem.push is not None:
                _write_csv(out / f"interp_observed_{label}_{i+1}.csv",
                           problem.spatial_grid,
                           [f"x{k+1}" for k in range(scn.ndim)],
                           problem.push @ phi)


def _write_baseline(problem: Problem, out: Path, spatial_names):
    scn = problem.scenario
    nominal = [a.nominal() for a in scn.arrays]
    for t in range(scn.times):
        ms = [problem.covariances[(t, j)] for j in range(len(scn.arrays))]
        if len(ms) == 1:
            spec = mvdr_spectrum(ms[0], nominal[0], problem.spatial_grid)
        else:
            spec = mvdr_spectrum(ms, nominal, problem.spatial_grid)
        _write_csv(out / f"mvdr_t{t}.csv", problem.spatial_grid, spatial_names, spec)


def _write_gnuplot(problem: Problem, out: Path):
    scn = problem.scenario
    lines = ["set datafile separator ','", "set key off"]
    if scn.ndim == 1:
        for idx in _tracked_indices(problem):
            label = problem.marginal_labels[idx]
            target = (f"observed_{label}.csv" if problem.push is not None
                      else f"marginal_{label}.csv")
            lines.append(f"plot '{target}' using 1:2 with lines title '{label}'")
            lines.append("pause -1")
    else:
        for idx in _tracked_indices(problem):
            label = problem.marginal_labels[idx]
            target = (f"observed_{label}.csv" if problem.push is not None
                      else f"marginal_{label}.csv")
            lines.append(f"splot '{target}' using 1:2:3 with points palette "
                         f"title '{label}'")
            lines.append("pause -1")
    (out / "plot.gp").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# brute-force cross-check for the `oracle` subcommand
# ---------------------------------------------------------------------------

def _shrink(scn: Scenario) -> Scenario:
    import copy
    small = copy.deepcopy(scn)
    small.space_axes = [(lo, hi, min(n, 3)) for lo, hi, n in scn.space_axes]
    if small.velocity_axes is not None:
        small.velocity_axes = [(lo, hi, min(n, 2)) for lo, hi, n in scn.velocity_axes]
    small.times = min(scn.times, 3 if scn.kind != "barycenter_tracking" else 2)
    if scn.kind == "fusion":
        small.times = 1
    small.snapshots = min(scn.snapshots, 8)
    for s in small.sources:
        if len(s.track) not in (1, small.times):
            s.track = s.track[: small.times]
    return small


def oracle_check(config_path, trials: int = 5, seed: int = 0) -> float:
    """Compare structured projections with the brute-force tensor oracle.

    Builds a shrunken version of the configured scenario's cost graph and
    checks every marginal projection plus a pairwise projection on random
    scaling states.  Returns the worst relative error.
    """
    scn = _shrink(load_scenario(config_path))
    problem = build_problem(scn)
    graph = problem.graph
    rng = np.random.default_rng(seed)
    worst = 0.0
    indices = graph.marginal_indices()
    for _ in range(trials):
        u = {idx: rng.uniform(0.3, 2.0, graph.marginal_size(idx)) for idx in indices}
        for idx in indices:
            got = project_marginal(graph, u, idx)
            want = brute_force_project(graph, u, idx)
            worst = max(worst, float(np.max(np.abs(got - want)) / np.max(want)))
        pair = _oracle_pair(graph)
        got = project_pair(graph, u, *pair)
        want = brute_force_project(graph, u, *pair)
        worst = max(worst, float(np.max(np.abs(got - want)) / np.max(want)))
    return worst


def _oracle_pair(graph):
    if isinstance(graph, StarChainGraph):
        return ((0, 0), (1, 0))
    return (0, 1)
