"""Hydrodynamic PDE solver (d = 1) and weak-formulation diagnostics.

The unknown is the node-sampled pair U = (rho, mom) on a uniform grid of
[0, 1].  The system is solved in conservative form

    dU/dt = d/du [ (1/2) dU/du - D(U) ],      D = sum_v (1, v) v Phi_v(U),

with the two-velocity closed form Phi_± = chi((rho ± mom)/2), i.e.

    D_0 = mom (1 - rho),        D_1 = rho - (rho^2 + mom^2)/2.

Space discretization: central face fluxes (second order), explicit Euler
in time under the diffusive CFL bound dt <= cfl h^2 plus a runtime check
of the advective bound.  Boundary closure per regime:

  * Dirichlet: boundary nodes pinned to the reservoir data d(0), d(1);
  * Robin: boundary-face flux F = (1/2)(U(0) - d(0)) on the left and
    (1/2)(d(1) - U(1)) on the right, applied through half-cell balances
    at the boundary nodes (this is the ghost-value flux identity written
    at the face, and it telescopes: total mass changes only through the
    boundary fluxes);
  * Neumann: same with zero boundary-face flux, hence exact discrete
    conservation of mass and momentum.

The weak-formulation residual evaluates every term of the integrated
form against a test function (trapezoidal quadrature in space and time;
in d = 1 the surface integrals are endpoint evaluations), and the energy
functional projects differences on the sine basis with the (z pi)^2 + 1
weights used in the uniqueness argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DIRICHLET = "dirichlet"
ROBIN = "robin"
NEUMANN = "neumann"
REGIMES = (DIRICHLET, ROBIN, NEUMANN)


class CFLViolation(ValueError):
    pass


class NotInU(ValueError):
    pass


class TestFunctionClassViolation(ValueError):
    __test__ = False          # keep pytest from collecting the class



def model1_drift(values: np.ndarray) -> np.ndarray:
    """Drift flux D(U) for the two-velocity model, vectorized over nodes."""
    rho = values[..., 0]
    mom = values[..., 1]
    out = np.empty_like(values)
    out[..., 0] = mom * (1.0 - rho)
    out[..., 1] = rho - 0.5 * (rho * rho + mom * mom)
    return out


def region_margin(values: np.ndarray) -> float:
    """min distance of (rho +- mom)/2 from the ends of (0, 1)."""
    tp = 0.5 * (values[..., 0] + values[..., 1])
    tm = 0.5 * (values[..., 0] - values[..., 1])
    return float(min(tp.min(), tm.min(), (1 - tp).min(), (1 - tm).min()))


@dataclass
class Field:
    """Grid function on M+1 nodes of [0, 1] with a boundary regime tag."""

    values: np.ndarray          # (M+1, 2)
    bc: str
    d0: np.ndarray              # reservoir data at u = 0, shape (2,)
    d1: np.ndarray              # reservoir data at u = 1
    drift: bool = True
    upwind: bool = False
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != 2:
            raise ValueError("values must have shape (M+1, 2)")
        if self.bc not in REGIMES:
            raise ValueError(f"unknown regime {self.bc!r}")
        self.d0 = np.asarray(self.d0, dtype=float)
        self.d1 = np.asarray(self.d1, dtype=float)

    @property
    def M(self) -> int:
        return self.values.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)

    def copy(self) -> "Field":
        return replace(self, values=self.values.copy())


def make_field(M: int, initial, bc: str, d0, d1, drift: bool = True,
               upwind: bool = False) -> Field:
    """initial: callable u -> (rho, mom) or an (M+1, 2) array."""
    grid = np.linspace(0.0, 1.0, M + 1)
    if callable(initial):
        vals = np.array([initial(u) for u in grid], dtype=float)
    else:
        vals = np.asarray(initial, dtype=float)
    f = Field(vals, bc, d0, d1, drift=drift, upwind=upwind)
    if bc == DIRICHLET:
        f.values[0] = f.d0
        f.values[-1] = f.d1
    return f


def flux(f: Field) -> np.ndarray:
    """Total flux at the M interior faces: (1/2) dU/du - D(face state)."""
    U = f.values
    h = f.h
    F = 0.5 * (U[1:] - U[:-1]) / h
    if f.drift:
        if region_margin(U) <= 0.0:
            raise NotInU("field values outside the invertibility region")
        if f.upwind:
            # Rusanov fallback: dissipative first-order drift flux
            DL = model1_drift(U[:-1])
            DR = model1_drift(U[1:])
            sL = np.abs(1 - U[:-1, 0]) + np.abs(U[:-1, 1])
            sR = np.abs(1 - U[1:, 0]) + np.abs(U[1:, 1])
            s = np.maximum(sL, sR)[:, None]
            D = 0.5 * (DL + DR) - 0.5 * s * (U[1:] - U[:-1])
        else:
            D = model1_drift(0.5 * (U[:-1] + U[1:]))
        F -= D
    return F


def boundary_fluxes(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Boundary-face fluxes (F at u=0, F at u=1) for Robin/Neumann."""
    if f.bc == NEUMANN:
        return np.zeros(2), np.zeros(2)
    if f.bc == ROBIN:
        return 0.5 * (f.values[0] - f.d0), 0.5 * (f.d1 - f.values[-1])
    raise ValueError("boundary fluxes are defined for Robin/Neumann closures")


def advective_speed(f: Field) -> float:
    """Bound on |dD/dU| row sums over the current state."""
    if not f.drift:
        return 0.0
    rho = f.values[:, 0]
    mom = f.values[:, 1]
    return float(np.max(np.abs(1.0 - rho) + np.abs(mom)))


def advance(f: Field, dt: float, cfl: float = 0.2) -> None:
    """One explicit conservative step, in place."""
    h = f.h
    if dt > cfl * h * h * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds {cfl:.2f} h^2 = {cfl * h * h:.3e}")
    s = advective_speed(f)
    if s > 0 and dt > h / (2.0 * s):
        raise CFLViolation(f"dt={dt:.3e} exceeds advective bound {h / (2 * s):.3e}")
    F = flux(f)
    U = f.values
    U[1:-1] += dt * (F[1:] - F[:-1]) / h
    if f.bc == DIRICHLET:
        U[0] = f.d0
        U[-1] = f.d1
    else:
        F0, F1 = boundary_fluxes(f)
        U[0] += dt * (F[0] - F0) / (0.5 * h)
        U[-1] += dt * (F1 - F[-1]) / (0.5 * h)
    f.t += dt
    if f.drift:
        margin = region_margin(U)
        if margin <= 0.0:
            tp = 0.5 * (U[:, 0] + U[:, 1])
            tm = 0.5 * (U[:, 0] - U[:, 1])
            bad = int(np.argmin(np.minimum(np.minimum(tp, 1 - tp),
                                           np.minimum(tm, 1 - tm))))
            raise NotInU(f"node {bad} left the invertibility region at "
                         f"t={f.t:.6f}")


@dataclass
class Trajectory:
    """Time slices of a solve, dense enough for quadrature in time."""

    times: np.ndarray           # (n_slices,)
    values: np.ndarray          # (n_slices, M+1, 2)
    bc: str
    d0: np.ndarray
    d1: np.ndarray
    drift: bool = True

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.shape[1])

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise KeyError(f"time {t} not stored (nearest {self.times[i]})")
        return self.values[i]


def solve(f: Field, T: float, dt: float | str = "auto",
          snapshots=(), cfl: float = 0.2, store_slices: int = 0) -> Trajectory:
    """March the field to time T, returning stored time slices.

    Snapshot times are always stored exactly (the step is shortened to
    land on them); additionally ~store_slices evenly spaced slices are
    kept for time quadrature (default: enough for the weak residual).
    """
    if dt == "auto":
        dt = cfl * f.h * f.h
        s = advective_speed(f)
        if s > 0:
            dt = min(dt, 0.5 * f.h / (2.0 * s))
    dt = float(dt)
    if store_slices <= 0:
        store_slices = max(200, 2 * f.M)
    marks = sorted(set([float(s) for s in snapshots])
                   | set(np.linspace(0.0, T, store_slices + 1).tolist()))
    if marks[0] > 0.0:
        marks = [0.0] + marks
    times = [f.t]
    slices = [f.values.copy()]
    for mark in marks:
        if mark <= f.t + 1e-15:
            continue
        while f.t < mark - 1e-13:
            step_dt = min(dt, mark - f.t)
            advance(f, step_dt, cfl=cfl)
        f.t = mark
        times.append(mark)
        slices.append(f.values.copy())
    return Trajectory(np.asarray(times), np.asarray(slices), f.bc,
                      f.d0.copy(), f.d1.copy(), f.drift)


# -- weak formulation ------------------------------------------------------

@dataclass
class TestFunction:
    """Smooth scalar test function with analytic derivatives.

    Each callable takes (t, u) with u an array of nodes and returns an
    array; ``name`` labels report rows.
    """

    __test__ = False

    value: callable
    dt: callable
    du: callable
    duu: callable
    name: str = "G"


def _trapz(y, x):
    return np.trapezoid(y, x)


def weak_residual(traj: Trajectory, G: TestFunction, regime: str) -> np.ndarray:
    """Residual of the integrated weak form against G, per component.

    For the Dirichlet regime G must vanish on the boundary; Robin adds
    the reservoir exchange terms with unit coefficient, Neumann drops
    them.  A solution of the regime's boundary-value problem makes this
    vanish as the discretization refines.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    times = traj.times
    grid = traj.grid
    vals = traj.values                      # (nt, M+1, 2)
    nt = len(times)

    g_end = G.value(times[-1], grid)
    g_start = G.value(times[0], grid)
    if regime == DIRICHLET:
        checks = [G.value(t, np.array([0.0, 1.0])) for t in
                  (times[0], 0.5 * (times[0] + times[-1]), times[-1])]
        if max(float(np.max(np.abs(c))) for c in checks) > 1e-12:
            raise TestFunctionClassViolation(
                "Dirichlet test functions must vanish at u = 0, 1")

    res = np.empty(2)
    ctilde = 1.0 if regime == ROBIN else 0.0
    drift_t = np.empty((nt, 2))
    bulk_t = np.empty((nt, 2))
    bnd_t = np.empty((nt, 2))
    for i, t in enumerate(times):
        U = vals[i]
        gv = G.value(t, grid)
        gt = G.dt(t, grid)
        guu = G.duu(t, grid)
        gu = G.du(t, grid)
        for k in range(2):
            bulk_t[i, k] = _trapz(U[:, k] * (gt + 0.5 * guu), grid)
        if traj.drift:
            D = model1_drift(U)
            for k in range(2):
                drift_t[i, k] = _trapz(D[:, k] * gu, grid)
        else:
            drift_t[i] = 0.0
        g0, g1 = gv[0], gv[-1]
        gu0, gu1 = gu[0], gu[-1]
        for k in range(2):
            bnd_t[i, k] = (
                -0.5 * ctilde * (traj.d1[k] - U[-1, k]) * g1
                + 0.5 * ctilde * (U[0, k] - traj.d0[k]) * g0
                + 0.5 * U[-1, k] * gu1
                - 0.5 * U[0, k] * gu0)
    for k in range(2):
        res[k] = (_trapz(vals[-1][:, k] * g_end, grid)
                  - _trapz(vals[0][:, k] * g_start, grid)
                  - _trapz(bulk_t[:, k], times)
                  - _trapz(drift_t[:, k], times)
                  + _trapz(bnd_t[:, k], times))
    return res


def residual_basket(regime: str) -> list[TestFunction]:
    """Five smooth test functions in the regime's admissible class."""
    z = np.zeros_like

    def tf(name, v, dt, du, duu):
        return TestFunction(value=v, dt=dt, du=du, duu=duu, name=name)

    if regime == DIRICHLET:
        return [
            tf("sin(pi u)", lambda t, u: np.sin(np.pi * u),
               lambda t, u: z(u), lambda t, u: np.pi * np.cos(np.pi * u),
               lambda t, u: -np.pi ** 2 * np.sin(np.pi * u)),
            tf("sin(2pi u)", lambda t, u: np.sin(2 * np.pi * u),
               lambda t, u: z(u), lambda t, u: 2 * np.pi * np.cos(2 * np.pi * u),
               lambda t, u: -4 * np.pi ** 2 * np.sin(2 * np.pi * u)),
            tf("u(1-u)", lambda t, u: u * (1 - u),
               lambda t, u: z(u), lambda t, u: 1 - 2 * u,
               lambda t, u: -2 * np.ones_like(u)),
            tf("e^-t sin(3pi u)", lambda t, u: np.exp(-t) * np.sin(3 * np.pi * u),
               lambda t, u: -np.exp(-t) * np.sin(3 * np.pi * u),
               lambda t, u: 3 * np.pi * np.exp(-t) * np.cos(3 * np.pi * u),
               lambda t, u: -9 * np.pi ** 2 * np.exp(-t) * np.sin(3 * np.pi * u)),
            tf("u^2(1-u)^2", lambda t, u: (u * (1 - u)) ** 2,
               lambda t, u: z(u),
               lambda t, u: 2 * u * (1 - u) * (1 - 2 * u),
               lambda t, u: 2 - 12 * u + 12 * u ** 2),
        ]
    return [
        tf("1", lambda t, u: np.ones_like(u), lambda t, u: z(u),
           lambda t, u: z(u), lambda t, u: z(u)),
        tf("cos(pi u)", lambda t, u: np.cos(np.pi * u),
           lambda t, u: z(u), lambda t, u: -np.pi * np.sin(np.pi * u),
           lambda t, u: -np.pi ** 2 * np.cos(np.pi * u)),
        tf("u^2", lambda t, u: u ** 2, lambda t, u: z(u),
           lambda t, u: 2 * u, lambda t, u: 2 * np.ones_like(u)),
        tf("e^-t cos(2pi u)", lambda t, u: np.exp(-t) * np.cos(2 * np.pi * u),
           lambda t, u: -np.exp(-t) * np.cos(2 * np.pi * u),
           lambda t, u: -2 * np.pi * np.exp(-t) * np.sin(2 * np.pi * u),
           lambda t, u: -4 * np.pi ** 2 * np.exp(-t) * np.cos(2 * np.pi * u)),
        tf("1+u", lambda t, u: 1 + u, lambda t, u: z(u),
           lambda t, u: np.ones_like(u), lambda t, u: z(u)),
    ]


# -- energy functional -----------------------------------------------------

def energy_weights(z_max: int) -> np.ndarray:
    z = np.arange(z_max + 1)
    return (z * np.pi) ** 2 + 1.0


def sine_basis(grid: np.ndarray, z_max: int) -> np.ndarray:
    """psi_z(u) rows for z = 0..z_max: psi_0 = 1, psi_z = sqrt(2) sin(z pi u).

    The sine family {psi_z : z >= 1} is a complete orthonormal system of
    L^2(0, 1); the constant mode is NOT orthogonal to the odd sines, so
    the energy functional uses z >= 1 by default (see energy()).
    """
    out = np.empty((z_max + 1, len(grid)))
    out[0] = 1.0
    for z in range(1, z_max + 1):
        out[z] = np.sqrt(2.0) * np.sin(z * np.pi * grid)
    return out


def energy_spectrum(values_a: np.ndarray, values_b: np.ndarray,
                    grid: np.ndarray, z_max: int = 64) -> np.ndarray:
    """Coefficients <diff_k, psi_z> for z = 0..z_max, shape (z_max+1, ncomp)."""
    if values_a.shape != values_b.shape:
        raise ValueError("fields must share a grid")
    diff = values_a - values_b
    psi = sine_basis(grid, z_max)
    return np.array([[_trapz(diff[:, k] * psi[z], grid)
                      for k in range(diff.shape[-1])]
                     for z in range(z_max + 1)])


def energy(values_a: np.ndarray, values_b: np.ndarray, grid: np.ndarray,
           z_max: int = 64, include_mean: bool = False) -> np.ndarray:
    """Gronwall energy V_k of the difference: sum_z <diff_k, psi_z>^2 / (2 a_z).

    Sums the orthonormal sine modes z = 1..z_max; include_mean adds the
    z = 0 constant-mode term (which destroys orthonormality, so the
    projection identity V(psi_1) = 1/(2 a_1) only holds without it).
    """
    coeffs = energy_spectrum(values_a, values_b, grid, z_max)
    a_z = energy_weights(z_max)
    z0 = 0 if include_mean else 1
    return np.sum(coeffs[z0:] ** 2 / (2.0 * a_z[z0:, None]), axis=0)
