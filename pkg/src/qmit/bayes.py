"""Pairwise Bayesian mitigation of readout errors.

All populations but two are frozen at their current estimates; the two free
ones share the budget ``S = R_i + R_j`` and are inferred on a grid of
``n_p`` points along the segment ``rho_i = t, rho_j = S - t`` under a
uniform prior. Cycling over all pairs, and repeating whole sweeps until the
populations stop moving, yields the mitigated distribution.

The log-posterior along a segment is a count-weighted sum of logarithms of
affine functions of ``t``, hence concave. The argmax sweep relies on this
twice: the grid maximiser is searched only next to the continuous maximiser,
and pairs whose update provably cannot improve the likelihood are skipped
using the slope vector ``u_k = sum_g c_g L[g, k] / T_g`` shared by all pairs.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConsistencyError, ContractError, ModeMismatchError, ResourceError
from .metrics import ConvergenceTrace
from .noise_model import MultiQubitNoiseModel
from .tally import OutcomeTally, bits_to_strings, empirical_frequencies

ARGMAX = "argmax"
MEAN = "mean"

_CACHE_TOL = 1e-12


@dataclass(frozen=True)
class MitigationConfig:
    """Knobs of :func:`mitigate`.

    ``improvement_tol`` is the smallest log-likelihood gain per shot for
    which an argmax update replaces the current estimate; it only has to
    sit above floating-point noise.
    """

    n_p: int = 101
    epsilon: float = 1e-3
    max_sweeps: int = 20
    estimator: str = ARGMAX
    likelihood_floor: float = 1e-300
    improvement_tol: float = 1e-10
    max_cache_entries: int = 100_000_000
    trace_pairs: bool = False

    def __post_init__(self):
        if self.n_p < 3:
            raise ContractError(f"n_p must be >= 3, got {self.n_p}")
        if not self.epsilon > 0:
            raise ContractError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_sweeps < 1:
            raise ContractError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.estimator not in (ARGMAX, MEAN):
            raise ContractError(f"estimator must be 'argmax' or 'mean', got {self.estimator!r}")
        if not self.likelihood_floor > 0:
            raise ContractError("likelihood_floor must be positive")


@dataclass
class MitigationState:
    """Mutable state of one mitigation run.

    Columns of ``L`` follow ``active_bits``; rows follow the tally groups.
    ``T[g]`` caches ``sum_k L[g, k] R[k]``.
    """

    active_bits: np.ndarray
    R: np.ndarray
    L: np.ndarray
    counts: np.ndarray
    T: np.ndarray
    sweeps: int = 0
    trace: ConvergenceTrace = field(default_factory=ConvergenceTrace)
    pair_trace: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return int(self.R.size)

    @property
    def active(self) -> list:
        return bits_to_strings(self.active_bits)

    def refresh_totals(self) -> None:
        self.T = self.L @ self.R

    def log_likelihood(self, floor: float = 1e-300) -> float:
        return float(self.counts @ np.log(np.maximum(self.L @ self.R, floor)))

    def permute(self, order: np.ndarray) -> None:
        self.active_bits = self.active_bits[order]
        self.R = self.R[order]
        self.L = np.asfortranarray(self.L[:, order])

    def prune(self) -> None:
        keep = self.R > 0.0
        if keep.all():
            return
        self.active_bits = self.active_bits[keep]
        self.R = self.R[keep]
        self.L = np.asfortranarray(self.L[:, keep])

    def populations(self) -> dict:
        return dict(zip(self.active, (float(r) for r in self.R)))


def init_state(tally: OutcomeTally, model: MultiQubitNoiseModel, cfg: MitigationConfig) -> MitigationState:
    """Empirical starting point plus the cached likelihood table."""
    if tally.mode != model.mode:
        raise ModeMismatchError(f"tally is {tally.mode} but the noise model is {model.mode}")
    if tally.n_qubits != model.n_qubits:
        raise ContractError(f"tally has {tally.n_qubits} qubits, noise model has {model.n_qubits}")
    g, m = tally.n_groups, tally.m
    if g * m > cfg.max_cache_entries:
        raise ResourceError(
            f"likelihood cache of G={g} groups x M={m} strings exceeds budget of {cfg.max_cache_entries} entries"
        )
    L = np.asfortranarray(model.likelihood_table(tally.keys, tally.active_bits))
    R = empirical_frequencies(tally)
    state = MitigationState(tally.active_bits.copy(), R, L, tally.counts.astype(float), L @ R)
    return state


@dataclass(frozen=True, eq=False)
class PairPosterior:
    """Log-posterior of one pair on the grid ``t = S * linspace(0, 1, n_p)``."""

    pair: tuple
    budget: float
    t: np.ndarray
    logpost: np.ndarray

    @property
    def argmax_index(self) -> int:
        return int(np.argmax(self.logpost))

    @property
    def mean(self) -> float:
        w = np.exp(self.logpost - self.logpost.max())
        return float((self.t * w).sum() / w.sum())


# Newton stops within this fraction of a grid step; grid points closer than
# the margin to the continuous maximiser are treated as ambiguous.
_NEWTON_TOL = 1e-4
_CELL_MARGIN = 1e-2
# half-width, in grid steps, of the window used by the local curvature bound
_WINDOW_STEPS = 3.0
_FIRST_CHUNK = 8
_MAX_CHUNK = 1024


def _grid_fractions(n_p: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_p)


def _segment_offset(state: MitigationState, i: int, j: int) -> np.ndarray:
    C = state.T - state.L[:, i] * state.R[i] - state.L[:, j] * state.R[j]
    low = C.min() if C.size else 0.0
    if low < -_CACHE_TOL:
        raise ConsistencyError(f"negative frozen likelihood {low:.3e} for pair ({i}, {j}); stale totals cache")
    return C


def _segment(state: MitigationState, i: int, j: int):
    """Totals along the pair segment as ``x(t) = base + delta * t``.

    With ``delta`` exactly zero the segment is exactly flat.
    """
    S = state.R[i] + state.R[j]
    Lj = state.L[:, j]
    base = _segment_offset(state, i, j) + Lj * S
    return base, state.L[:, i] - Lj, S


def pair_log_posterior(state: MitigationState, i: int, j: int, cfg: MitigationConfig) -> PairPosterior:
    """Grid log-posterior of ``(rho_i, rho_j)`` with the other populations frozen.

    ``logpost(t) = sum_g c_g ln max(L[g,i] t + L[g,j] (S - t) + C_g, floor)``,
    evaluated as ``base + delta t``;
    the uniform prior only adds a constant and is dropped.
    """
    if i == j:
        raise ContractError("a pair needs two distinct strings")
    base, delta, S = _segment(state, i, j)
    t = _grid_fractions(cfg.n_p) * S
    x = base[:, None] + delta[:, None] * t
    # column-wise reduction sums every grid point in the same order
    logpost = (state.counts[:, None] * np.log(np.maximum(x, cfg.likelihood_floor))).sum(axis=0)
    return PairPosterior((i, j), float(S), t, logpost)


def estimate_pair(p: PairPosterior, estimator: str = ARGMAX) -> tuple:
    """Point estimate ``(R_i', R_j')`` from a pair posterior; the two sum to the budget."""
    if estimator == ARGMAX:
        t = float(p.t[p.argmax_index])
    elif estimator == MEAN:
        t = min(max(p.mean, 0.0), p.budget)
    else:
        raise ContractError(f"unknown estimator {estimator!r}")
    return t, p.budget - t


class _ArgmaxUpdater:
    """Exact grid-argmax pair updates with incumbent retention.

    Works on the columns of ``state`` in place; callers may permute the
    columns beforehand.
    """

    def __init__(self, state: MitigationState, cfg: MitigationConfig):
        self.st = state
        self.n = cfg.n_p
        self.frac = _grid_fractions(cfg.n_p)
        self.stride = max(2, int(np.ceil(np.sqrt(cfg.n_p))))
        self.floor = cfg.likelihood_floor
        self.tol = cfg.improvement_tol * float(state.counts.sum())
        self._w = None
        self._ll = None

    def weights(self) -> np.ndarray:
        """``c_g / T_g``; its product with a likelihood column is the slope term."""
        if self._w is None:
            st = self.st
            self._w = st.counts / np.maximum(st.T, self.floor)
        return self._w

    def log_likelihood(self) -> float:
        if self._ll is None:
            st = self.st
            self._ll = float(st.counts @ np.log(np.maximum(st.T, self.floor)))
        return self._ll

    def update(self, i: int, j: int) -> bool:
        st = self.st
        Ri, Rj = st.R[i], st.R[j]
        S = Ri + Rj
        if S == 0.0:
            return False
        base, delta, _ = _segment(st, i, j)
        grid = self.frac * S
        c = st.counts
        floor = self.floor
        n = self.n
        base2, delta2 = base[:, None], delta[:, None]

        def f(ts):
            return c @ np.log(np.maximum(base2 + delta2 * ts, floor))

        found = self._maximiser(delta, base, S, Ri)
        if found is None:
            k, best = self._search(f, grid)
        else:
            t_opt, g_now = found
            # concavity: the tangent at the incumbent bounds every gain
            if g_now * (t_opt - Ri) <= self.tol:
                return False
            pos = t_opt / S * (n - 1)
            k0 = min(n - 1, int(pos))
            frac = pos - k0
            lo = k0 - 1 if frac < _CELL_MARGIN else k0
            hi = k0 + 2 if frac > 1.0 - _CELL_MARGIN else k0 + 1
            ks = np.arange(max(0, lo), min(n - 1, hi) + 1)
            vals = f(grid[ks])
            a = int(np.argmax(vals))
            k, best = int(ks[a]), vals[a]
        t = grid[k]
        if t == Ri or not best - self.log_likelihood() > self.tol:
            return False
        st.R[i] = t
        st.R[j] = S - t
        st.T = base + delta * t
        self._w = None
        self._ll = None
        return True

    def _maximiser(self, delta, base, S, t):
        """Continuous maximiser of ``sum c ln(base + delta t)`` on ``[0, S]``.

        Safeguarded Newton iteration on the decreasing slope, started at
        ``t``. Returns the maximiser together with the slope at the start
        point, or None if the iteration fails to settle.
        """
        c, floor = self.st.counts, self.floor
        tol_t = _NEWTON_TOL * S / (self.n - 1)

        def slope(t):
            r = delta / np.maximum(base + delta * t, floor)
            return c @ r, c @ (r * r)

        lo, hi = 0.0, S
        checked_lo = checked_hi = False
        g0 = None
        for _ in range(64):
            g, h = slope(t)
            if g0 is None:
                g0 = g
            if g > 0:
                lo = t
            elif g < 0:
                hi = t
            else:
                return t, g0
            if hi - lo <= tol_t:
                return t, g0
            tn = t + g / h if h > 0 else 0.5 * (lo + hi)
            if tn <= lo:
                if lo == 0.0 and not checked_lo:
                    checked_lo = True
                    if slope(0.0)[0] <= 0:
                        return 0.0, g0
                tn = 0.5 * (lo + hi)
            elif tn >= hi:
                if hi == S and not checked_hi:
                    checked_hi = True
                    if slope(S)[0] >= 0:
                        return S, g0
                tn = 0.5 * (lo + hi)
            if abs(tn - t) <= tol_t:
                return tn, g0
            t = tn
        return None

    def _search(self, f, grid):
        # On a concave sequence the first maximiser lies within one stride of
        # the first maximiser of a strided subsample.
        n, s = self.n, self.stride
        coarse = np.unique(np.append(np.arange(0, n, s), n - 1))
        p = int(coarse[int(np.argmax(f(grid[coarse])))])
        fine = np.arange(max(0, p - s + 1), min(n, p + s))
        vals = f(grid[fine])
        a = int(np.argmax(vals))
        return int(fine[a]), vals[a]

    def skippable(self, i: int, lo: int, hi: int) -> np.ndarray:
        """Mask over partners ``lo..hi-1`` whose update is certainly a no-op.

        The slope of the pair log-posterior at the current point is
        ``u_i - u_j`` with ``u = w @ L``. On the segment every total obeys
        ``x_g <= T_g + |L_i - L_j| S``, which bounds the curvature away from
        zero by ``kappa``: the gain of moving to ``t`` is at most
        ``slope d - kappa d**2 / 2`` with ``d = t - R_i``, and only grid
        points count. At an endpoint a slope pointing outward pins the grid
        maximiser there.
        """
        st = self.st
        w = self.weights()
        Li = st.L[:, i]
        block = st.L[:, lo:hi]
        ui = w @ Li
        uj = w @ block
        Ri = st.R[i]
        Rj = st.R[lo:hi]
        S = Ri + Rj
        slope = ui - uj
        margin = 1e-12 * (abs(ui) + np.abs(uj))
        gain = np.abs(slope) * S
        live = np.flatnonzero(gain > 0.5 * self.tol)
        if live.size:
            gain[live] = self._local_gain_bound(Li, block[:, live], slope[live], Ri, S[live])
        skip = (S == 0.0) | (gain <= 0.5 * self.tol)
        skip |= (Rj == 0.0) & (slope > margin)
        if Ri == 0.0:
            skip |= slope < -margin
        return skip


    def _curvature(self, Li, block, reach):
        # lower bound on -f'' over points within ``reach`` of the incumbent
        d = Li[:, None] - block
        r = d / (self.st.T[:, None] + np.abs(d) * reach)
        return self.st.counts @ (r * r)

    def _local_gain_bound(self, Li, block, slope, Ri, S):
        """Upper bound on the grid gain, from curvature near the incumbent.

        Inside the window ``|t - R_i| <= D`` the gain of moving by ``d`` is
        at most ``slope d - kappa d**2 / 2``, with ``kappa`` the curvature
        bound over the window. When that bound is negative at both window
        edges, concavity rules out any gain outside the window; otherwise the
        linear bound ``|slope| S`` is kept.
        """
        n = self.n
        step = S / (n - 1)
        reach = np.minimum(S, _WINDOW_STEPS * step)
        kappa = self._curvature(Li, block, reach)
        local = np.abs(slope) < 0.5 * kappa * reach
        # the best grid point under a concave quadratic is next to its vertex
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.floor((Ri + slope / kappa) / step)
        k = np.clip(np.where(local, k, 0.0), 0, n - 2)
        d0 = k * step - Ri
        d1 = d0 + step
        best = np.maximum(slope * d0 - 0.5 * kappa * d0 * d0, slope * d1 - 0.5 * kappa * d1 * d1)
        return np.where(local, best, np.abs(slope) * S)


def _sweep_argmax(state: MitigationState, cfg: MitigationConfig, on_pair) -> None:
    # Columns are already in sweep order, so pair (a, b) means rows a < b.
    # Moves tend to come in runs: after a move the next partner is updated
    # directly, otherwise partners are screened in growing chunks.
    upd = _ArgmaxUpdater(state, cfg)
    m = state.m
    for a in range(m - 1):
        b = a + 1
        chunk = _FIRST_CHUNK
        direct = False
        while b < m:
            if direct:
                before = state.R[a]
                if upd.update(a, b):
                    _after_pair(state, cfg, a, b, before, on_pair)
                else:
                    direct = False
                b += 1
                continue
            e = min(m, b + chunk)
            todo = np.flatnonzero(~upd.skippable(a, b, e)) + b
            b = e
            chunk = min(4 * chunk, _MAX_CHUNK)
            for j in todo:
                j = int(j)
                before = state.R[a]
                if upd.update(a, j):
                    _after_pair(state, cfg, a, j, before, on_pair)
                    b = j + 1
                    chunk = _FIRST_CHUNK
                    direct = True
                    break


def _sweep_mean(state: MitigationState, cfg: MitigationConfig, on_pair) -> None:
    m = state.m
    for i in range(m - 1):
        for j in range(i + 1, m):
            if state.R[i] + state.R[j] == 0.0:
                continue
            post = pair_log_posterior(state, i, j, cfg)
            ri, rj = estimate_pair(post, MEAN)
            before = state.R[i]
            base, delta, _ = _segment(state, i, j)
            state.R[i], state.R[j] = ri, rj
            state.T = base + delta * ri
            _after_pair(state, cfg, i, j, before, on_pair)


def _after_pair(state, cfg, i, j, before, on_pair) -> None:
    if cfg.trace_pairs:
        si, sj = bits_to_strings(state.active_bits[[i, j]])
        state.pair_trace.append((state.sweeps + 1, si, sj, abs(float(state.R[i]) - float(before))))
    if on_pair is not None:
        on_pair(state, i, j)


def sweep(
    state: MitigationState,
    cfg: MitigationConfig,
    on_pair: Optional[Callable] = None,
) -> float:
    """Update every unordered pair of active strings once, then prune.

    Pairs are visited row by row over the active strings ranked by
    descending population (ties by bitstring), ranking fixed at sweep start.
    Returns the total-variation distance between the populations before
    and after the sweep. ``on_pair(state, i, j)`` is called after each pair
    update that changed the state; during a sweep the columns of ``state``
    are held in visiting order, so ``i`` and ``j`` index that order.
    """
    state.refresh_totals()
    if state.m < 2:
        return 0.0
    before = state.R.copy()
    order = np.lexsort((np.arange(state.m), -state.R))
    state.permute(order)
    try:
        if cfg.estimator == ARGMAX:
            _sweep_argmax(state, cfg, on_pair)
        else:
            _sweep_mean(state, cfg, on_pair)
    finally:
        state.permute(np.argsort(order))
    tv = 0.5 * float(np.abs(state.R - before).sum())
    state.prune()
    return tv


@dataclass
class MitigationResult:
    populations: dict
    sweeps: int
    trace: ConvergenceTrace
    converged: bool
    config: MitigationConfig
    pair_trace: list = field(default_factory=list)

    @property
    def tv_trace(self) -> list:
        return self.trace.tv

    def to_json_dict(self) -> dict:
        doc = {
            "populations": self.populations,
            "sweeps": self.sweeps,
            "tv_trace": self.trace.tv,
            "active_sizes": self.trace.active_sizes,
            "converged": self.converged,
            "config": asdict(self.config),
        }
        if self.config.trace_pairs:
            doc["pair_trace"] = [list(entry) for entry in self.pair_trace]
        return doc

    def to_json(self) -> str:
        """Canonical result file text; identical runs give identical bytes."""
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def mitigate(
    tally: OutcomeTally,
    model: MultiQubitNoiseModel,
    cfg: Optional[MitigationConfig] = None,
    on_pair: Optional[Callable] = None,
) -> MitigationResult:
    """Mitigated populations of the observed strings.

    Sweeps run until the total-variation change of a sweep drops below
    ``cfg.epsilon`` or ``cfg.max_sweeps`` is reached. Strings whose
    population reaches zero are dropped from the result.
    """
    cfg = cfg or MitigationConfig()
    start = time.perf_counter()
    state = init_state(tally, model, cfg)
    converged = False
    while state.sweeps < cfg.max_sweeps:
        tv = sweep(state, cfg, on_pair)
        state.sweeps += 1
        state.trace.append(state.sweeps, tv, state.m, time.perf_counter() - start)
        if tv < cfg.epsilon:
            converged = True
            break
    return MitigationResult(state.populations(), state.sweeps, state.trace, converged, cfg, state.pair_trace)


def brute_force_posterior(tally: OutcomeTally, model: MultiQubitNoiseModel, grid_resolution: int = 101) -> dict:
    """Maximum of the full joint likelihood by exhaustive simplex scan.

    Only for tiny problems (``M <= 3``, ``grid_resolution <= 201``); it is the
    reference the pairwise scheme is tested against.
    """
    m = tally.m
    if m > 3 or not 2 <= grid_resolution <= 201:
        raise ContractError(f"brute force limited to M <= 3 and grid_resolution <= 201 (got M={m}, {grid_resolution})")
    names = tally.active
    if m == 1:
        return {names[0]: 1.0}
    L = model.likelihood_table(tally.keys, tally.active_bits)
    steps = grid_resolution - 1
    if m == 2:
        a = np.arange(grid_resolution)
        pts = np.stack([a, steps - a], axis=1)
    else:
        a, b = np.meshgrid(np.arange(grid_resolution), np.arange(grid_resolution), indexing="ij")
        ok = a + b <= steps
        a, b = a[ok], b[ok]
        pts = np.stack([a, b, steps - a - b], axis=1)
    rho = pts / steps
    ll = tally.counts @ np.log(np.maximum(L @ rho.T, 1e-300))
    best = rho[int(np.argmax(ll))]
    return dict(zip(names, (float(v) for v in best)))
