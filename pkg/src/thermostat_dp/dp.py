"""Backward dynamic programming over a gridded wall-temperature space.

The cost-to-go is tabulated on a uniform Cartesian grid of wall states
and read off-grid by multilinear interpolation.  Infeasibility (no
setpoint keeps the on-peak draw under the cap gamma) is encoded as +inf
and propagates conservatively: a query whose cell has an infinite corner
with nonzero weight is infinite, while zero-weight corners are ignored
so exact node hits stay exact.

Equal Dirichlet boundaries make the conduction operator symmetric about
the slab midpoint, so a symmetric initial profile stays symmetric under
any control sequence.  The solver exploits that by folding the state
space to its first ceil(m/2) coordinates (mirror completion), cutting
the node count from n^m to n^ceil(m/2); disable with use_symmetry=False
or by passing an asymmetric initial state to a solver built without it.

The terminal value layer is the demand charge a peak of exactly gamma
would incur under the tariff's accrual convention, so the fixed-gamma
objective J*(gamma) is the quantity the bill actually charges; searching
gamma then trades the demand term against the energy cost.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import thermal
from .tariff import TariffSchedule, total_bill
from .thermal import BuildingParams

# queries this far (degC) outside the box are counted as clamped; anything
# closer is float noise from successors landing exactly on the boundary
CLAMP_TOL = 1e-9

GAMMA_MODES = ("total", "bisection")


class InfeasibleError(RuntimeError):
    """No admissible control keeps the on-peak draw under the cap."""


class ConstraintViolationError(RuntimeError):
    """A rolled-out control exceeded the peak cap beyond tolerance."""


@dataclass(frozen=True)
class ComfortBand:
    """Allowed setpoint range [t_min, t_max], degC."""

    t_min: float
    t_max: float

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError(f"need t_min < t_max, got [{self.t_min}, {self.t_max}]")


@dataclass(frozen=True)
class StateGrid:
    """Uniform nodes covering [lo, hi] in each of ndim dimensions."""

    lo: float
    hi: float
    n_nodes: int
    ndim: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.n_nodes < 2:
            raise ValueError(f"n_nodes must be >= 2, got {self.n_nodes}")
        if self.ndim < 1:
            raise ValueError(f"ndim must be >= 1, got {self.ndim}")

    @classmethod
    def for_band(cls, band: ComfortBand, ndim: int, n_nodes: int = 21,
                 margin: float = 2.0) -> "StateGrid":
        return cls(band.t_min - margin, band.t_max + margin, n_nodes, ndim)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n_nodes - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_nodes)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return (self.axis,) * self.ndim

    @property
    def size(self) -> int:
        return self.n_nodes ** self.ndim

    def node_matrix(self) -> np.ndarray:
        """All grid nodes as a (size, ndim) array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass
class ValueGrid:
    """Cost-to-go tabulated at every node of `grid` for time layer j ($)."""

    grid: StateGrid
    j: int
    values: np.ndarray  # flat (grid.size,); +inf marks infeasible nodes


@dataclass(frozen=True)
class GammaSearchConfig:
    """Bounds and budget for the peak-cap search.

    mode "bisection" finds the smallest feasible cap; mode "total"
    additionally minimizes the full objective J*(gamma) over feasible
    caps by a coarse scan plus golden-section refinement.
    """

    gamma_lo: float
    gamma_hi: float
    b_max: int = 16
    mode: str = "total"
    du: float = 0.25
    n_scan: int = 16

    def __post_init__(self):
        if not self.gamma_lo < self.gamma_hi:
            raise ValueError(f"need gamma_lo < gamma_hi, got [{self.gamma_lo}, {self.gamma_hi}]")
        if self.b_max < 1:
            raise ValueError(f"b_max must be >= 1, got {self.b_max}")
        if self.mode not in GAMMA_MODES:
            raise ValueError(f"mode must be one of {GAMMA_MODES}, got {self.mode!r}")
        if not self.du > 0:
            raise ValueError(f"du must be positive, got {self.du}")
        if self.n_scan < 2:
            raise ValueError(f"n_scan must be >= 2, got {self.n_scan}")


@dataclass
class Policy:
    """Tabulated solve for one cap: value layers and per-node minimizers.

    values[j] is the cost-to-go layer at time j (j = 0..n_f); controls[j]
    holds the minimizing setpoint per node (NaN where infeasible).
    """

    grid: StateGrid
    gamma: float
    band: ComfortBand
    values: np.ndarray    # (n_f+1, grid.size)
    controls: np.ndarray  # (n_f, grid.size)


@dataclass
class FixedGammaSolution:
    gamma: float
    j_star: float
    feasible: bool
    policy: Policy
    clamp_count: int


@dataclass
class RolloutResult:
    """Greedy forward pass under a policy: realized controls, states, money."""

    controls: np.ndarray
    trajectory: np.ndarray  # (n_f+1, m) full wall states
    powers_w: np.ndarray
    bill: "object"          # BillBreakdown
    gamma: float
    clamp_count: int

    @property
    def peak_kw(self) -> float:
        return self.bill.peak_kw


@dataclass
class GammaSearchResult:
    gamma: float
    j_star: float
    solution: FixedGammaSolution
    iterations: int
    evaluations: int
    bracket: tuple[float, float] | None = None
    lo_was_feasible: bool = False


def control_grid(band: ComfortBand, du: float) -> np.ndarray:
    """Uniform setpoint grid over the band, spacing at most du, both ends included."""
    if not du > 0:
        raise ValueError(f"du must be positive, got {du}")
    span = band.t_max - band.t_min
    n = math.ceil(span / du - 1e-9) + 1
    return np.linspace(band.t_min, band.t_max, n)


def admissible_controls(params: BuildingParams, tariff: TariffSchedule, exterior,
                        k: int, wall_t1: float, gamma: float, band: ComfortBand,
                        du: float, *, with_boundary: bool = True) -> np.ndarray:
    """Candidate setpoints at step k from wall state wall_t1, ascending.

    Off-peak steps admit the whole setpoint grid.  On-peak steps keep the
    grid points whose draw stays at or under gamma and, when it falls
    inside the band, append the boundary setpoint solving g = gamma.
    """
    if not gamma >= 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    grid = control_grid(band, du)
    if not tariff.is_on_peak(k):
        return grid
    exterior = np.asarray(exterior, dtype=float)
    te = exterior[k]
    c1 = 2.0 * params.c_in / params.dx
    g = (te - grid) / params.r_e + c1 * (wall_t1 - grid)
    keep = grid[g <= gamma]
    if with_boundary and np.isfinite(gamma):
        u_star = (te / params.r_e + c1 * wall_t1 - gamma) / (1.0 / params.r_e + c1)
        in_band = band.t_min <= u_star <= band.t_max
        # skip when the root already sits on a kept lattice point (ulp noise)
        if in_band and (len(keep) == 0
                        or np.abs(keep - u_star).min() > 1e-9 * max(1.0, abs(u_star))):
            keep = np.unique(np.append(keep, u_star))
    return keep


def _corner_weights(grid: StateGrid, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Cell corners and multilinear weights for query points (Q, ndim).

    Returns (indices (Q, 2^ndim) into the flat node array, weights of the
    same shape, count of queries clamped back into the box).
    """
    n = grid.n_nodes
    h = grid.ndim
    t = (pts - grid.lo) / grid.step
    i0 = np.floor(t).astype(np.int64)
    np.clip(i0, 0, n - 2, out=i0)
    f = t - i0
    tol = CLAMP_TOL / grid.step
    clamped = int(np.any((f < -tol) | (f > 1.0 + tol), axis=1).sum())
    np.clip(f, 0.0, 1.0, out=f)

    strides = n ** np.arange(h - 1, -1, -1)
    q = len(pts)
    idx = np.empty((q, 2 ** h), dtype=np.int64)
    wgt = np.empty((q, 2 ** h))
    for c, bits in enumerate(product((0, 1), repeat=h)):
        flat = np.zeros(q, dtype=np.int64)
        w = np.ones(q)
        for d, bit in enumerate(bits):
            flat += (i0[:, d] + bit) * strides[d]
            w = w * (f[:, d] if bit else 1.0 - f[:, d])
        idx[:, c] = flat
        wgt[:, c] = w
    return idx, wgt, clamped


def _interp_gathered(values: np.ndarray, idx: np.ndarray, wgt: np.ndarray) -> np.ndarray:
    # zero-weight corners never poison the query; +inf with positive weight does
    v = np.where(wgt > 0.0, values[idx], 0.0)
    return (wgt * v).sum(axis=1)


def interpolate(value_grid: ValueGrid, pts) -> tuple[np.ndarray, int]:
    """Multilinear read of a value layer at query points (Q, ndim)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    idx, wgt, clamped = _corner_weights(value_grid.grid, pts)
    return _interp_gathered(value_grid.values, idx, wgt), clamped


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class DpSolver:
    """Backward-induction solver for one building / tariff / trace setup.

    Precomputes the (folded) one-step dynamics and, for the shared
    setpoint grid, the interpolation stencil of every (node, control)
    successor, so each Bellman layer is a gather plus vector arithmetic.
    Instances are immutable after construction and safe to share.
    """

    def __init__(self, params: BuildingParams, tariff: TariffSchedule,
                 band: ComfortBand, exterior, *, grid: StateGrid | None = None,
                 du: float = 0.25, use_symmetry: bool = True,
                 controls_override=None, append_boundary: bool = True,
                 clamp_power_at_zero: bool = False):
        self.params = params
        self.tariff = tariff
        self.band = band
        self.exterior = np.asarray(exterior, dtype=float)
        if len(self.exterior) < tariff.n_f:
            raise ValueError(
                f"exterior trace has {len(self.exterior)} samples, horizon needs {tariff.n_f}")
        if not np.all(np.isfinite(self.exterior[:tariff.n_f])):
            raise ValueError("exterior trace contains non-finite temperatures")

        m = params.m
        self.use_symmetry = bool(use_symmetry)
        self.h = (m + 1) // 2 if self.use_symmetry else m
        self.grid = grid if grid is not None else StateGrid.for_band(band, self.h)
        if self.grid.ndim != self.h:
            raise ValueError(f"grid must have ndim = {self.h}, got {self.grid.ndim}")
        if self.grid.lo > band.t_min or self.grid.hi < band.t_max:
            raise ValueError("state grid must cover the comfort band")
        self.du = du
        self.append_boundary = bool(append_boundary)
        self.clamp_power_at_zero = bool(clamp_power_at_zero)

        # fold the full m-state step onto the first h mirror-free coordinates
        s_full, c_full = thermal.step_matrix(params)
        mirror = [min(i, m - 1 - i) for i in range(m)]
        s_red = np.zeros((self.h, self.h))
        for col in range(m):
            s_red[:, mirror[col]] += s_full[: self.h, col]
        self._s_red = s_red
        self._c_red = c_full[: self.h]

        if controls_override is not None:
            seqs = controls_override
            if isinstance(seqs, np.ndarray):
                seqs = [seqs] * tariff.n_f if seqs.ndim == 1 else list(seqs)
            elif len(seqs) and np.isscalar(seqs[0]):
                seqs = [np.asarray(seqs, dtype=float)] * tariff.n_f
            if len(seqs) != tariff.n_f:
                raise ValueError("controls_override must give one candidate set per step")
            self._controls = [np.sort(np.asarray(s, dtype=float)) for s in seqs]
            self._u_grid = None
        else:
            self._controls = None
            self._u_grid = control_grid(band, du)

        self._on = tariff.on_peak_mask()
        self._price = tariff.price_array()
        self._kwh = tariff.dt_hours / 1000.0
        self._c1 = 2.0 * params.c_in / params.dx

        self._x = self.grid.node_matrix()
        self._x1 = self._x[:, 0]
        self._base = self._x @ self._s_red.T

        if self._u_grid is not None:
            succ = (self._base[:, None, :]
                    + self._c_red[None, None, :] * self._u_grid[None, :, None])
            idx, wgt, clamped = _corner_weights(self.grid, succ.reshape(-1, self.h))
            self._tbl_idx = idx
            self._tbl_wgt = wgt
            self._tbl_clamps = clamped
        else:
            self._tbl_idx = None
            self._tbl_clamps = 0

    # -- state folding -------------------------------------------------

    def reduce_state(self, temps) -> np.ndarray:
        temps = np.asarray(temps, dtype=float)
        if temps.shape != (self.params.m,):
            raise ValueError(f"state must have length {self.params.m}, got {temps.shape}")
        if self.use_symmetry:
            if not np.allclose(temps, temps[::-1], rtol=0.0, atol=1e-9):
                raise ValueError(
                    "initial wall profile is not symmetric; rebuild the solver "
                    "with use_symmetry=False")
            return temps[: self.h].copy()
        return temps.copy()

    def expand_state(self, reduced: np.ndarray) -> np.ndarray:
        if not self.use_symmetry:
            return np.asarray(reduced, dtype=float)
        tail = reduced[: self.params.m - self.h][::-1]
        return np.concatenate([reduced, tail])

    # -- pieces of the backup -------------------------------------------

    def _g_of(self, k: int, u, x1):
        """Draw g(k, u, x1), broadcasting over candidate and node axes."""
        te = self.exterior[k]
        g = (te - u) / self.params.r_e + self._c1 * (x1 - u)
        if self.clamp_power_at_zero:
            g = np.maximum(g, 0.0)
        return g

    def terminal_values(self, gamma: float) -> np.ndarray:
        # demand_weight is $/kW, the cap is in W
        w = self.tariff.demand_weight
        value = 0.0 if w == 0.0 else w * gamma / 1000.0
        return np.full(self.grid.size, value)

    def controls_at(self, k: int) -> np.ndarray:
        if self._controls is not None:
            return self._controls[k]
        return self._u_grid

    def bellman_backup(self, v_next: ValueGrid, gamma: float) -> tuple[ValueGrid, np.ndarray, int]:
        """One backward layer: build V at j-1 from V at j.

        Returns (value layer j-1, minimizing setpoint per node with NaN at
        infeasible nodes, clamped-successor count).  Ties go to the
        smallest setpoint.
        """
        j = v_next.j
        if j < 1:
            raise ValueError("cannot back up past time 0")
        k = j - 1
        u = self.controls_at(k)
        n = self.grid.size
        clamps = 0

        g = self._g_of(k, u[None, :], self._x1[:, None])
        stage = (self._price[k] * self._kwh) * g

        if self._tbl_idx is not None:
            interp = _interp_gathered(v_next.values, self._tbl_idx, self._tbl_wgt)
            interp = interp.reshape(n, len(u))
        else:
            succ = (self._base[:, None, :] + self._c_red[None, None, :] * u[None, :, None])
            idx, wgt, cl = _corner_weights(self.grid, succ.reshape(-1, self.h))
            clamps += cl
            interp = _interp_gathered(v_next.values, idx, wgt).reshape(n, len(u))

        total = stage + interp
        if self._on[k] and np.isfinite(gamma):
            total = np.where(g <= gamma, total, np.inf)

        # candidates ascend in u, so argmin's first-hit rule is the tie-break
        best_i = np.argmin(total, axis=1)
        rows = np.arange(n)
        best = total[rows, best_i]
        best_u = u[best_i]

        if (self._on[k] and self.append_boundary and self._controls is None
                and np.isfinite(gamma)):
            te = self.exterior[k]
            denom = 1.0 / self.params.r_e + self._c1
            u_b = (te / self.params.r_e + self._c1 * self._x1 - gamma) / denom
            ok = (u_b >= self.band.t_min) & (u_b <= self.band.t_max)
            if ok.any():
                g_b = self._g_of(k, u_b, self._x1)
                stage_b = (self._price[k] * self._kwh) * g_b
                succ_b = self._base + self._c_red[None, :] * u_b[:, None]
                idx, wgt, cl = _corner_weights(self.grid, succ_b)
                clamps += cl
                tot_b = stage_b + _interp_gathered(v_next.values, idx, wgt)
                tot_b = np.where(ok, tot_b, np.inf)
                take = (tot_b < best) | ((tot_b == best) & (u_b < best_u))
                best = np.where(take, tot_b, best)
                best_u = np.where(take, u_b, best_u)

        best_u = np.where(np.isfinite(best), best_u, np.nan)
        return ValueGrid(self.grid, j - 1, best), best_u, clamps

    # -- solves ----------------------------------------------------------

    def solve_fixed_gamma(self, gamma: float, t0) -> FixedGammaSolution:
        """Tabulate the cost-to-go for a fixed cap and read it at t0."""
        t0r = self.reduce_state(t0)
        n_f = self.tariff.n_f
        values = np.empty((n_f + 1, self.grid.size))
        controls = np.full((n_f, self.grid.size), np.nan)
        values[n_f] = self.terminal_values(gamma)
        clamps = self._tbl_clamps
        layer = ValueGrid(self.grid, n_f, values[n_f])
        for j in range(n_f, 0, -1):
            layer, u_layer, cl = self.bellman_backup(layer, gamma)
            values[j - 1] = layer.values
            controls[j - 1] = u_layer
            clamps += cl
        at_t0, cl = interpolate(ValueGrid(self.grid, 0, values[0]), t0r[None, :])
        clamps += cl
        j_star = float(at_t0[0])
        policy = Policy(self.grid, gamma, self.band, values, controls)
        return FixedGammaSolution(gamma, j_star, bool(np.isfinite(j_star)), policy, clamps)

    def rollout(self, policy: Policy, t0) -> RolloutResult:
        """Greedy forward pass re-minimizing the backup at the realized state."""
        gamma = policy.gamma
        n_f = self.tariff.n_f
        xr = self.reduce_state(t0)
        controls = np.empty(n_f)
        powers = np.empty(n_f)
        trajectory = np.empty((n_f + 1, self.params.m))
        trajectory[0] = self.expand_state(xr)
        clamps = 0

        for k in range(n_f):
            cand = self._rollout_candidates(k, xr[0], gamma)
            if len(cand) == 0:
                raise InfeasibleError(
                    f"no admissible setpoint at step {k} from the realized state "
                    "(cap too small or state grid too coarse)")
            g = self._g_of(k, cand, xr[0])
            stage = (self._price[k] * self._kwh) * g
            succ = (self._s_red @ xr)[None, :] + self._c_red[None, :] * cand[:, None]
            nxt = ValueGrid(self.grid, k + 1, policy.values[k + 1])
            v, cl = interpolate(nxt, succ)
            clamps += cl
            total = stage + v
            i = int(np.argmin(total))
            if not np.isfinite(total[i]):
                raise InfeasibleError(
                    f"value function is infinite at every candidate of step {k} "
                    "(cap too small or state grid too coarse)")
            if self._on[k] and np.isfinite(gamma) and g[i] > gamma * (1 + 1e-9) + 1e-6:
                raise ConstraintViolationError(
                    f"step {k}: realized draw {g[i]:.6g} W exceeds cap {gamma:.6g} W "
                    "beyond tolerance (state grid too coarse)")
            controls[k] = cand[i]
            powers[k] = g[i]
            xr = succ[i]
            trajectory[k + 1] = self.expand_state(xr)

        bill = total_bill(self.tariff, powers)
        return RolloutResult(controls, trajectory, powers, bill, gamma, clamps)

    def _rollout_candidates(self, k: int, x1: float, gamma: float) -> np.ndarray:
        u = self.controls_at(k)
        if not self._on[k] or not np.isfinite(gamma):
            return u
        g = self._g_of(k, u, x1)
        keep = u[g <= gamma]
        if self.append_boundary and self._controls is None:
            te = self.exterior[k]
            denom = 1.0 / self.params.r_e + self._c1
            u_b = (te / self.params.r_e + self._c1 * x1 - gamma) / denom
            if self.band.t_min <= u_b <= self.band.t_max:
                keep = np.unique(np.append(keep, u_b))
        return keep

    # -- gamma searches ----------------------------------------------------

    def gamma_bisection(self, config: GammaSearchConfig, t0) -> GammaSearchResult:
        """Bisect to the smallest tested feasible cap.

        Requires feasibility at gamma_hi.  A feasible gamma_lo is allowed
        (reported via lo_was_feasible); the bracket still halves b_max
        times, so its final width is (gamma_hi - gamma_lo) / 2**b_max.
        """
        lo, hi = config.gamma_lo, config.gamma_hi
        best = self.solve_fixed_gamma(hi, t0)
        if not best.feasible:
            raise InfeasibleError(f"problem infeasible at gamma upper bound {hi:.6g} W")
        lo_feasible = self.solve_fixed_gamma(lo, t0).feasible
        evaluations = 2
        gl, gu = lo, hi
        for _ in range(config.b_max):
            mid = 0.5 * (gl + gu)
            sol = self.solve_fixed_gamma(mid, t0)
            evaluations += 1
            if sol.feasible:
                gu, best = mid, sol
            else:
                gl = mid
        return GammaSearchResult(gamma=gu, j_star=best.j_star, solution=best,
                                 iterations=config.b_max, evaluations=evaluations,
                                 bracket=(gl, gu), lo_was_feasible=lo_feasible)

    def gamma_total_search(self, config: GammaSearchConfig, t0,
                           threads: int = 1) -> GammaSearchResult:
        """Minimize J*(gamma) over feasible caps.

        Bisection pins the feasible floor, a coarse n_scan-point sweep of
        [gamma_min, gamma_hi] seeds a golden-section refinement of the
        best cell, run down to width (gamma_hi - gamma_lo) / 2**b_max.
        """
        bis = self.gamma_bisection(config, t0)
        gmin, ghi = bis.gamma, config.gamma_hi
        target = (config.gamma_hi - config.gamma_lo) * 2.0 ** (-config.b_max)
        cache: dict[float, float] = {gmin: bis.j_star}

        def h_of(gamma: float) -> float:
            if gamma not in cache:
                cache[gamma] = self.solve_fixed_gamma(gamma, t0).j_star
            return cache[gamma]

        xs = np.linspace(gmin, ghi, config.n_scan)
        fresh = [float(g) for g in xs if float(g) not in cache]
        for g, v in zip(fresh, _parallel_map(
                lambda g: self.solve_fixed_gamma(g, t0).j_star, fresh, threads)):
            cache[g] = v
        ys = [h_of(float(g)) for g in xs]
        i = int(np.argmin(ys))
        a = float(xs[max(i - 1, 0)])
        b = float(xs[min(i + 1, len(xs) - 1)])

        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        iterations = 0
        if b - a > target:
            c = b - invphi * (b - a)
            d = a + invphi * (b - a)
            yc, yd = h_of(c), h_of(d)
            while b - a > target and iterations < 200:
                if yc <= yd:
                    b, d, yd = d, c, yc
                    c = b - invphi * (b - a)
                    yc = h_of(c)
                else:
                    a, c, yc = c, d, yd
                    d = a + invphi * (b - a)
                    yd = h_of(d)
                iterations += 1

        g_best = min(cache, key=lambda g: (cache[g], g))
        sol = self.solve_fixed_gamma(g_best, t0)
        return GammaSearchResult(gamma=g_best, j_star=sol.j_star, solution=sol,
                                 iterations=iterations,
                                 evaluations=bis.evaluations + len(cache),
                                 bracket=None, lo_was_feasible=bis.lo_was_feasible)

    def search_gamma(self, config: GammaSearchConfig, t0,
                     threads: int = 1) -> GammaSearchResult:
        if config.mode == "total":
            return self.gamma_total_search(config, t0, threads=threads)
        return self.gamma_bisection(config, t0)
