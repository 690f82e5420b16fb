"""Exact continuous-time simulation of the particle system.

A particle at site x jumps along each directed lattice edge (x, y) at rate
N^2 * eta(x) * (alpha + sigma * eta(y)).  Time is macroscopic: the N^2
factor implements the diffusive space-time rescaling.  Event selection uses
a Fenwick tree over per-site exit rates (O(log N^d) per event) with O(1)
neighborhood rate updates; see ``_kernels`` for the jit-compiled inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from fieldslab import _kernels as K
from fieldslab.lattice import Torus, is_admissible

__all__ = ["ModelParams", "Trajectory", "jump_rate", "Simulation", "simulate"]

DEFAULT_OCCUPANCY_CAP = 10**6


@dataclass(frozen=True)
class ModelParams:
    """Model instance: interaction sign, per-site capacity/attraction alpha,
    lattice side N, dimension d."""

    sigma: int
    alpha: int
    N: int
    d: int = 1

    def __post_init__(self):
        if self.sigma not in (-1, 0, 1):
            raise ValueError("sigma must be -1, 0 or +1")
        if self.alpha < 1:
            raise ValueError("alpha must be a positive integer")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @cached_property
    def torus(self) -> Torus:
        return Torus(self.d, self.N)

    @property
    def n2(self) -> float:
        return float(self.N) ** 2


def jump_rate(occupancy: np.ndarray, x: int, y: int, params: ModelParams) -> float:
    """Rate of moving one particle along the directed edge (x, y).

    Equals N^2 * eta(x) * (alpha + sigma * eta(y)) when y is a lattice
    neighbor of x, else 0.  On the N=2 torus the two directed edges joining
    a pair of sites each carry this rate (callers accumulate multiplicity).
    """
    torus = params.torus
    x = int(x)
    y = int(y)
    if not np.any(torus.neighbor_table()[x] == y):
        return 0.0
    return params.n2 * occupancy[x] * (params.alpha + params.sigma * occupancy[y])


@dataclass
class Trajectory:
    """Simulation output: terminal state, optional snapshots and event log."""

    initial: np.ndarray
    final: np.ndarray
    t_end: float
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    events: np.ndarray | None = None  # structured columns (time, source, target)


class Simulation:
    """Resumable exact simulation of one trajectory.

    State lives in flat numpy arrays shared with the jit kernel; advancing
    to increasing times is exact (the chain pauses between events, using
    memorylessness of the exponential clocks).
    """

    def __init__(
        self,
        occupancy: np.ndarray,
        params: ModelParams,
        seed: int = 0,
        occupancy_cap: int = DEFAULT_OCCUPANCY_CAP,
        validate: bool = True,
    ):
        occupancy = np.asarray(occupancy, dtype=np.int64).copy()
        if occupancy.shape != (params.torus.n_sites,):
            raise ValueError("occupancy length must equal the number of sites")
        if validate and not is_admissible(occupancy, params.sigma, params.alpha):
            raise ValueError("initial configuration is not admissible")
        self.params = params
        self.occupancy = occupancy
        self.occupancy_cap = int(occupancy_cap)
        self.time = 0.0
        self._nbr = params.torus.neighbor_table()
        self._rng = K.seed_state(np.uint64(seed))
        self._rates = K.site_exit_rates(
            occupancy, self._nbr, params.sigma, params.alpha, params.n2
        )
        self._tree = K.fenwick_build(self._rates)
        self._total = float(self._rates.sum())
        self._n0 = int(occupancy.sum())

    @property
    def total_rate(self) -> float:
        return self._total

    def advance_to(self, t: float) -> "Simulation":
        if t < self.time:
            raise ValueError("cannot run backwards in time")
        p = self.params
        self.time, self._total, status = K.kmc_run(
            self.occupancy,
            self._nbr,
            self._rates,
            self._tree,
            self._total,
            self.time,
            float(t),
            self._rng,
            p.sigma,
            p.alpha,
            p.n2,
            self.occupancy_cap,
        )
        if status == K.STATUS_OVERFLOW:
            raise RuntimeError(
                f"site occupancy exceeded the configured ceiling {self.occupancy_cap}"
            )
        return self

    def advance_recording(self, t: float, max_events: int = 1_000_000):
        """Advance to t, returning the (time, source, target) event log."""
        p = self.params
        chunks = []
        cap = 65536
        while True:
            ev_t = np.empty(cap)
            ev_src = np.empty(cap, np.int64)
            ev_dst = np.empty(cap, np.int64)
            self.time, self._total, status, n_ev = K.kmc_run_record(
                self.occupancy,
                self._nbr,
                self._rates,
                self._tree,
                self._total,
                self.time,
                float(t),
                self._rng,
                p.sigma,
                p.alpha,
                p.n2,
                self.occupancy_cap,
                ev_t,
                ev_src,
                ev_dst,
            )
            chunks.append((ev_t[:n_ev], ev_src[:n_ev], ev_dst[:n_ev]))
            if status == K.STATUS_OVERFLOW:
                raise RuntimeError(
                    f"site occupancy exceeded the configured ceiling {self.occupancy_cap}"
                )
            if status != K.STATUS_BUFFER_FULL:
                break
            if sum(len(c[0]) for c in chunks) > max_events:
                raise RuntimeError(f"event log exceeded max_events={max_events}")
        times = np.concatenate([c[0] for c in chunks])
        src = np.concatenate([c[1] for c in chunks])
        dst = np.concatenate([c[2] for c in chunks])
        return times, src, dst

    def check_invariants(self):
        assert int(self.occupancy.sum()) == self._n0, "particle number not conserved"
        assert is_admissible(self.occupancy, self.params.sigma, self.params.alpha)


def simulate(
    occupancy0: np.ndarray,
    t_end: float,
    params: ModelParams,
    seed: int = 0,
    snapshot_times=None,
    observer=None,
    record_events: bool = False,
    occupancy_cap: int = DEFAULT_OCCUPANCY_CAP,
    check: bool = True,
) -> Trajectory:
    """Run one exact trajectory to macroscopic time t_end.

    ``observer(t, occupancy_view)`` is called at each requested snapshot
    time (state right-continuous at t); snapshots are also collected on the
    returned Trajectory.  With record_events=True the full (time, source,
    target) log is kept.
    """
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    sim = Simulation(occupancy0, params, seed=seed, occupancy_cap=occupancy_cap)
    traj = Trajectory(initial=sim.occupancy.copy(), final=sim.occupancy, t_end=float(t_end))
    times = sorted(float(t) for t in (snapshot_times or []))
    if any(t < 0 or t > t_end for t in times):
        raise ValueError("snapshot times must lie in [0, t_end]")

    all_events = []

    def _advance(t):
        if record_events:
            all_events.append(sim.advance_recording(t))
        else:
            sim.advance_to(t)

    for t in times:
        _advance(t)
        traj.snapshot_times.append(t)
        traj.snapshots.append(sim.occupancy.copy())
        if observer is not None:
            observer(t, sim.occupancy)
    if not times or times[-1] < t_end:
        _advance(float(t_end))
    if record_events:
        times_arr = np.concatenate([e[0] for e in all_events]) if all_events else np.empty(0)
        src = np.concatenate([e[1] for e in all_events]) if all_events else np.empty(0, np.int64)
        dst = np.concatenate([e[2] for e in all_events]) if all_events else np.empty(0, np.int64)
        traj.events = np.rec.fromarrays([times_arr, src, dst], names=["time", "source", "target"])
    if check:
        sim.check_invariants()
    traj.final = sim.occupancy
    return traj
