"""Finite-difference model of heat storage in interior walls.

The building's interior walls are treated as a one-dimensional slab of
width ``l_in`` whose two faces are held at the room air temperature ``u``
(the thermostat setpoint) as equal Dirichlet boundary conditions.  The
slab is discretized at ``m`` interior points, dx = l_in/(m+1) apart, and
the heat equation dT/dt = alpha * d2T/dx2 is stepped with explicit
(forward) Euler:

    T'  =  (I + A*dt) T  +  (B*dt) u

where A is the (alpha/dx^2) tridiag(1, -2, 1) conduction matrix and B
couples both boundary faces to u.  Explicit stepping is only stable for
alpha*dt/dx^2 <= 1/2; construction enforces that bound as a hard error
rather than letting an unstable run produce garbage.

The HVAC electrical power needed to hold the room at u is the sum of the
conduction gain through the exterior walls and the heat currently flowing
out of (or into) the interior-wall storage:

    g(k, u, T1)  =  (T_e[k] - u)/r_e  +  (2 c_in / dx) (T1 - u)      [W]

with T1 the wall temperature at the face-adjacent grid point.  g is
signed: negative values mean the room would have to be heated to hold u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StabilityError(ValueError):
    """Explicit time stepping would be unstable for these parameters."""


@dataclass(frozen=True)
class BuildingParams:
    """Physical constants of the building envelope and wall discretization.

    alpha : thermal diffusivity of the interior walls, m^2/s
    l_in  : interior-wall width, m
    r_e   : thermal resistance of the exterior walls, K/W
    c_in  : thermal capacitance of the interior walls, W*m/K
    m     : number of interior wall grid points
    dt    : time step, s

    The spatial step is derived, dx = l_in/(m+1).
    """

    alpha: float
    l_in: float
    r_e: float
    c_in: float
    m: int
    dt: float

    def __post_init__(self):
        for name in ("alpha", "l_in", "r_e", "c_in", "dt"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ValueError(f"m must be an integer >= 1, got {self.m!r}")
        ratio = self.stability_ratio
        if ratio > 0.5:
            raise StabilityError(
                f"alpha*dt/dx^2 = {ratio:.4f} exceeds 1/2; explicit stepping "
                "would be unstable (reduce dt or use fewer wall grid points)")

    @property
    def dx(self) -> float:
        """Spatial step of the wall discretization, m."""
        return self.l_in / (self.m + 1)

    @property
    def stability_ratio(self) -> float:
        """alpha*dt/dx^2; must stay at or below 1/2."""
        return self.alpha * self.dt / self.dx ** 2


def build_dynamics(params: BuildingParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time update operators (A, B) with dT/dt = A T + B u.

    A is m-by-m tridiagonal with -2*alpha/dx^2 on the diagonal and
    alpha/dx^2 on both off-diagonals; B carries the boundary coupling
    alpha/dx^2 into the first and last rows (which coincide for m = 1).
    Row sums of A plus the matching entry of B are zero, so a uniform
    wall held at u is an equilibrium.
    """
    r = params.alpha / params.dx ** 2
    m = params.m
    a = np.zeros((m, m))
    i = np.arange(m)
    a[i, i] = -2.0 * r
    a[i[:-1], i[:-1] + 1] = r
    a[i[:-1] + 1, i[:-1]] = r
    b = np.zeros(m)
    b[0] += r
    b[-1] += r
    return a, b


def step_matrix(params: BuildingParams) -> tuple[np.ndarray, np.ndarray]:
    """Discrete one-step operators (S, c) with T' = S T + c u."""
    a, b = build_dynamics(params)
    return np.eye(params.m) + a * params.dt, b * params.dt


def _check_state(params: BuildingParams, temps) -> np.ndarray:
    temps = np.asarray(temps, dtype=float)
    if temps.shape != (params.m,):
        raise ValueError(
            f"wall state must have length m = {params.m}, got shape {temps.shape}")
    if not np.all(np.isfinite(temps)):
        raise ValueError("wall state contains non-finite temperatures")
    return temps


def step(params: BuildingParams, temps, u: float) -> np.ndarray:
    """Advance the wall one explicit-Euler step under boundary control u."""
    temps = _check_state(params, temps)
    if not np.isfinite(u):
        raise ValueError(f"control u must be finite, got {u!r}")
    s, c = step_matrix(params)
    return s @ temps + c * u


def power(params: BuildingParams, k: int, u: float, wall_t1: float,
          exterior, *, clamp_at_zero: bool = False) -> float:
    """HVAC electrical power required to hold the room at u at step k, W.

    Signed by default (negative = the room would need heating); pass
    clamp_at_zero=True to floor cooling-only equipment at 0 W.
    """
    exterior = np.asarray(exterior, dtype=float)
    if not 0 <= k < len(exterior):
        raise IndexError(f"step {k} outside exterior trace of length {len(exterior)}")
    g = (exterior[k] - u) / params.r_e + 2.0 * params.c_in / params.dx * (wall_t1 - u)
    g = float(g)
    if clamp_at_zero and g < 0.0:
        return 0.0
    return g


def power_coefficients(params: BuildingParams) -> tuple[float, float, float]:
    """Affine coefficients (du, dT1, dT_e) of the power map g."""
    c1 = 2.0 * params.c_in / params.dx
    ce = 1.0 / params.r_e
    return -(ce + c1), c1, ce


def simulate(params: BuildingParams, t0, controls, exterior, *,
             clamp_power_at_zero: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Roll the wall forward under a control sequence.

    Returns (trajectory, powers_w): trajectory has len(controls)+1 rows of
    wall states (row k is the state *before* control k is applied), and
    powers_w[k] = power(k, controls[k], trajectory[k][0]).
    """
    controls = np.asarray(controls, dtype=float)
    exterior = np.asarray(exterior, dtype=float)
    if controls.ndim != 1 or len(controls) == 0:
        raise ValueError("controls must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(controls)):
        raise ValueError("controls contain non-finite values")
    n = len(controls)
    if len(exterior) < n:
        raise ValueError(
            f"exterior trace has {len(exterior)} samples, horizon needs {n}")
    if not np.all(np.isfinite(exterior[:n])):
        raise ValueError("exterior trace contains non-finite temperatures")
    t0 = _check_state(params, t0)

    s, c = step_matrix(params)
    trajectory = np.empty((n + 1, params.m))
    powers = np.empty(n)
    trajectory[0] = t0
    for k in range(n):
        powers[k] = power(params, k, controls[k], trajectory[k][0], exterior,
                          clamp_at_zero=clamp_power_at_zero)
        trajectory[k + 1] = s @ trajectory[k] + c * controls[k]
    return trajectory, powers
