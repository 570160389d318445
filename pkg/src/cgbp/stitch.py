"""Coarse-grained BP: run chain BP on several MERA levels and stitch the curves.

Level ``i`` is the edge term after ``i`` MERA layers; one coarse bond
covers ``3^i`` fine bonds, so energies and BP errors are divided by ``3^i``.
Between two levels the switch sits where their curves come closest.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import BpConfig, BpResult, run_chain_bp
from .mera import MeraLayer, optimize_mera
from .operators import MultiSiteOperator, operator


class GridError(ValueError):
    pass


class OrderingError(ValueError):
    pass


@dataclass(frozen=True)
class LevelSeries:
    level: int
    temperatures: np.ndarray
    values: np.ndarray
    bp_errors: np.ndarray
    converged: np.ndarray = None
    iterations: np.ndarray = None

    def __post_init__(self):
        T = np.asarray(self.temperatures, dtype=float)
        if np.any(np.diff(T) >= 0):
            raise GridError("temperature grid must be strictly descending")
        n = len(T)
        object.__setattr__(self, "temperatures", T)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "bp_errors", np.asarray(self.bp_errors, dtype=float))
        if self.converged is None:
            object.__setattr__(self, "converged", np.ones(n, dtype=bool))
        if self.iterations is None:
            object.__setattr__(self, "iterations", np.zeros(n, dtype=int))
        if len(self.values) != n or len(self.bp_errors) != n:
            raise GridError("values and errors must match the temperature grid")
        if np.any(self.bp_errors < 0):
            raise ValueError("BP errors must be non-negative")


@dataclass(frozen=True)
class Switch:
    temperature: float
    index: int
    degenerate: bool = False
    candidates: tuple[int, ...] = ()

    def __float__(self):
        return float(self.temperature)


def _check_grids(*series: LevelSeries) -> np.ndarray:
    T = series[0].temperatures
    for s in series[1:]:
        if s.temperatures.shape != T.shape or not np.array_equal(s.temperatures, T):
            raise GridError("level series are on different temperature grids")
    return T


def switching_temperature(s_i: LevelSeries, s_next: LevelSeries, below: float = np.inf) -> Switch:
    """Grid temperature where ``|x_i - x_{i+1}|`` has its minimum.

    Only points where both levels converged and ``T < below`` are searched.
    Several interior local minima are resolved by how close the gap is to
    the BP error of level ``i``; endpoints count only without an interior
    minimum.  A flat gap or a tie flags the result as degenerate and returns
    the highest-temperature candidate.
    """
    T = _check_grids(s_i, s_next)
    if len(T) < 3:
        raise GridError("switch search needs at least 3 grid points")
    idx = np.flatnonzero(s_i.converged & s_next.converged & (T < below))
    if len(idx) == 0:
        raise GridError("no temperatures where both levels converged")
    gap = np.abs(s_i.values[idx] - s_next.values[idx])
    n = len(gap)
    if n == 1 or np.all(gap == gap[0]):
        return Switch(float(T[idx[0]]), int(idx[0]), True, tuple(int(k) for k in idx))
    interior = [k for k in range(1, n - 1) if gap[k] <= gap[k - 1] and gap[k] <= gap[k + 1]]
    if not interior:
        interior = [k for k in (0, n - 1) if gap[k] == gap.min()]
    cands = [int(idx[k]) for k in interior]
    if len(cands) == 1:
        return Switch(float(T[cands[0]]), cands[0], False, tuple(cands))
    score = np.array([abs(abs(s_i.values[c] - s_next.values[c]) - s_i.bp_errors[c]) for c in cands])
    best = np.flatnonzero(score == score.min())
    pick = cands[int(best[0])]  # grid is descending, so first is hottest
    return Switch(float(T[pick]), pick, len(best) > 1, tuple(cands))


@dataclass(frozen=True)
class StitchedSeries:
    temperatures: np.ndarray
    switch_temps: tuple[float, ...]
    values: np.ndarray
    total_error: np.ndarray
    active_level: np.ndarray
    constants: tuple[float, ...] = ()


def stitch(series: list[LevelSeries], switches) -> StitchedSeries:
    """Piecewise curve: level ``i`` on ``T_{i+1} <= T < T_i``, with the accumulated bound.

    ``total_error(T) = sum_{j<=i} dx_{j-1}(T_j) + dx_i(T)`` for the active level ``i``.
    """
    T = _check_grids(*series)
    temps = [float(s) for s in switches]
    if len(temps) > len(series) - 1:
        raise OrderingError("more switches than level boundaries")
    if any(b >= a for a, b in zip(temps, temps[1:])):
        raise OrderingError("switching temperatures must be strictly decreasing")
    active = np.array([sum(1 for s in temps if t < s) for t in T], dtype=int)
    consts = [0.0]
    for j, Tj in enumerate(temps, start=1):
        k = int(np.argmin(np.abs(T - Tj)))
        consts.append(consts[-1] + float(series[j - 1].bp_errors[k]))
    values = np.array([series[a].values[k] for k, a in enumerate(active)])
    total = np.array([consts[a] + series[a].bp_errors[k] for k, a in enumerate(active)])
    return StitchedSeries(T, tuple(temps), values, total, active, tuple(consts))


def geometric_grid(t_min: float, t_max: float, per_decade: int = 20, refine=(), refine_per_decade: int = 60):
    """Descending geometric grid, denser inside the ``refine`` intervals."""
    if not 0 < t_min < t_max:
        raise GridError("need 0 < t_min < t_max")

    def span(a, b, per):
        n = max(2, int(np.ceil(per * np.log10(b / a))) + 1)
        return np.geomspace(a, b, n)

    pts = [span(t_min, t_max, per_decade)]
    for a, b in refine:
        a, b = max(a, t_min), min(b, t_max)
        if a < b:
            pts.append(span(a, b, refine_per_decade))
    grid = np.unique(np.round(np.concatenate(pts), 12))
    return grid[::-1]


def level_series(
    h: MultiSiteOperator,
    level: int,
    temperatures,
    l: int,
    tol: float = 1e-12,
    max_iter=None,
    belief_max_dim: int = 2048,
) -> tuple[LevelSeries, list[BpResult]]:
    """Chain BP on one level over a descending grid, warm-starting each point."""
    scale = 3.0**level
    T = np.asarray(temperatures, dtype=float)
    results = []
    warm = None
    for t in T:
        res = run_chain_bp(h, BpConfig(l, 1.0 / t, tol, max_iter, belief_max_dim), warm)
        results.append(res)
        warm = res
    return (
        LevelSeries(
            level,
            T,
            np.array([r.observables["energy"] / scale for r in results]),
            np.array([r.error_estimate / scale for r in results]),
            np.array([r.converged for r in results]),
            np.array([r.iterations for r in results]),
        ),
        results,
    )


def _level_job(args) -> LevelSeries:
    return level_series(*args)[0]


@dataclass
class CgbpResult:
    stitched: StitchedSeries
    series: list[LevelSeries]
    switches: list[Switch]
    layers: list[MeraLayer] = field(default_factory=list)
    mera_energy: float = float("nan")
    seed: int = 0


def run_cgbp(
    h: MultiSiteOperator,
    levels: int,
    chi: int,
    l: int,
    temperatures,
    seed: int = 0,
    sweeps: int = 200,
    top_sites: int = 4,
    layers: list[MeraLayer] | None = None,
    tol: float = 1e-12,
    max_iter: int | None = None,
    belief_max_dim: int = 2048,
    workers: int = 1,
) -> CgbpResult:
    """Optimise ``levels`` MERA layers, run BP on every level, find switches, stitch.

    The optimisation is deterministic; ``seed`` is carried through for the
    provenance record only.
    """
    T = np.asarray(temperatures, dtype=float)
    if len(T) < 10 or np.any(np.diff(T) >= 0) or T[0] / T[-1] < 10:
        raise GridError("need a descending grid of at least 10 points spanning a decade")
    templates = [h]
    mera_energy = float("nan")
    if levels > 0:
        if layers is None:
            res = optimize_mera(h.matrix, [chi] * levels, sweeps, top_sites)
            layers, mera_energy, hams = res.layers, res.energy, res.hamiltonians
        else:
            from .mera import coarse_hamiltonians

            hams = coarse_hamiltonians(h.matrix, layers)
        for k in range(1, levels + 1):
            templates.append(operator(hams[k], (0, 1), dims=layers[k - 1].chi_out, hermitian=True))
    jobs = [(tpl, k, T, l, tol, max_iter, belief_max_dim) for k, tpl in enumerate(templates)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            series = list(pool.map(_level_job, jobs))
    else:
        series = [_level_job(j) for j in jobs]
    switches = []
    upper = np.inf
    for a, b in zip(series, series[1:]):
        try:
            sw = switching_temperature(a, b, below=upper)
        except GridError:
            break
        switches.append(sw)
        upper = sw.temperature
    stitched = stitch(series, switches)
    return CgbpResult(stitched, series, switches, list(layers or []), mera_energy, seed)
