"""Grand-canonical product-measure thermodynamics.

A chemical potential lam = (lam_0, ..., lam_d) defines a product measure
on one site's occupancy bits: each velocity v is occupied independently
with probability theta_v(lam) = sigmoid(lam_0 + sum_k lam_k v_k).  The
forward map sends lam to the site density and momenta

    rho(lam)  = sum_v theta_v(lam),
    mom_k(lam) = sum_v v_k theta_v(lam),

a diffeomorphism onto the open set U (interior of the convex hull of the
site observables).  The numerical inverse is a damped Newton iteration
with the analytic Jacobian; membership of U is decided operationally by
Newton convergence.  The flux coefficient entering the hydrodynamic
equations is Phi_v(p) = chi(theta_v(Lambda(p))) with chi(r) = r(1 - r).
"""

from __future__ import annotations

import json
import math

import numpy as np

from .models import VelocityModel

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100


class NotInU(ValueError):
    """Requested density/momentum vector is outside (or numerically at
    the edge of) the invertibility region U."""


class ProfileOutOfRange(ValueError):
    pass


def sigmoid(x):
    """Logistic function, overflow-safe for large |x| (branch at 0)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def theta_v(lam, v) -> float:
    """Occupation probability of velocity v under m_lam."""
    lam = np.asarray(lam, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(sigmoid(lam[0] + lam[1:] @ v))


def theta_all(lam, model: VelocityModel) -> np.ndarray:
    """theta_v for every velocity of the model, in model order."""
    lam = np.asarray(lam, dtype=float)
    return sigmoid(model.vtilde @ lam)


def forward_map(lam, model: VelocityModel) -> np.ndarray:
    """(rho, mom_1, ..., mom_d) as a function of the chemical potential."""
    th = theta_all(lam, model)
    return model.vtilde.T @ th


def forward_jacobian(lam, model: VelocityModel) -> np.ndarray:
    """d(rho,mom)/d(lam); symmetric positive definite on finite lam."""
    th = theta_all(lam, model)
    w = th * (1.0 - th)
    vt = model.vtilde
    return vt.T @ (w[:, None] * vt)


def inverse_map(p, model: VelocityModel, tol: float = NEWTON_TOL) -> np.ndarray:
    """Chemical potential Lambda(p) with forward_map(Lambda(p)) = p.

    Damped Newton from lam = 0 (the symmetric fixed point): full steps,
    halving the step while the residual norm fails to decrease.  Raises
    NotInU when the iteration does not converge within the budget, which
    is the operational test for p in U.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (model.dim + 1,):
        raise ValueError(f"expected {model.dim + 1} components, got {p.shape}")
    lam = np.zeros(model.dim + 1)
    res = forward_map(lam, model) - p
    rnorm = np.max(np.abs(res))
    for _ in range(NEWTON_MAX_ITER):
        if rnorm <= tol:
            return lam
        jac = forward_jacobian(lam, model)
        try:
            step = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as exc:
            raise NotInU(f"singular Jacobian at lam={lam}") from exc
        scale = 1.0
        for _ in range(60):
            trial = lam - scale * step
            tres = forward_map(trial, model) - p
            tnorm = np.max(np.abs(tres))
            if tnorm < rnorm or tnorm <= tol:
                break
            scale *= 0.5
        else:
            raise NotInU(f"line search stalled at residual {rnorm:.3e}")
        lam, res, rnorm = trial, tres, tnorm
    raise NotInU(f"Newton did not converge (residual {rnorm:.3e}); "
                 "input likely outside U")


def in_region(p, model: VelocityModel) -> bool:
    try:
        inverse_map(p, model)
        return True
    except NotInU:
        return False


def chi(r):
    """Static compressibility r(1 - r) (Bernoulli variance)."""
    r = np.asarray(r, dtype=float)
    out = r * (1.0 - r)
    return out if out.ndim else float(out)


def phi_v(p, v, model: VelocityModel) -> float:
    """Flux coefficient chi(theta_v(Lambda(p)))."""
    lam = inverse_map(p, model)
    return chi(theta_v(lam, v))


def phi_all(p, model: VelocityModel) -> np.ndarray:
    lam = inverse_map(p, model)
    return chi(theta_all(lam, model))


# Closed forms for the d=1 two-velocity model {+1, -1}: the 2x2 system
# rho = th_+ + th_-, mom = th_+ - th_- inverts explicitly.  Used as the
# PDE fast path and as the independent oracle for the Newton inverse.

def theta_pm_d1(rho, mom):
    """(theta_+, theta_-) = ((rho+mom)/2, (rho-mom)/2)."""
    rho = np.asarray(rho, dtype=float)
    mom = np.asarray(mom, dtype=float)
    return 0.5 * (rho + mom), 0.5 * (rho - mom)


def in_region_d1(rho, mom) -> bool:
    tp, tm = theta_pm_d1(rho, mom)
    return bool(np.all(tp > 0) and np.all(tp < 1) and np.all(tm > 0) and np.all(tm < 1))


def inverse_map_d1(rho, mom) -> np.ndarray:
    tp, tm = theta_pm_d1(rho, mom)
    if not (0 < tp < 1 and 0 < tm < 1):
        raise NotInU(f"(rho, mom)=({rho}, {mom}) outside U")
    lp = math.log(tp / (1 - tp))
    lm = math.log(tm / (1 - tm))
    return np.array([0.5 * (lp + lm), 0.5 * (lp - lm)])


def boundary_data(profiles, model: VelocityModel):
    """Reservoir boundary data d(u) on the hyperplane u_1 = 0 or 1.

    ``profiles`` maps each velocity index to the reservoir density
    function alpha_v (or beta_v) of the transverse coordinate; returns
    the function u_tilde -> sum_v (alpha_v, v_1 alpha_v, ..., v_d alpha_v).
    """
    vt = model.vtilde

    def data(u_tilde=()):
        vals = np.array([_eval_profile(profiles[i], u_tilde)
                         for i in range(model.n_velocities)])
        if np.any(vals <= 0.0) or np.any(vals >= 1.0):
            bad = [model.velocities[i] for i in range(len(vals))
                   if not 0.0 < vals[i] < 1.0]
            raise ProfileOutOfRange(f"reservoir density outside (0,1) for {bad}")
        return vt.T @ vals

    return data


def _eval_profile(prof, u_tilde):
    if callable(prof):
        return float(prof(u_tilde))
    return float(prof)


class ReservoirProfile:
    """Per-velocity reservoir densities on the transverse torus.

    Built from constants or truncated Fourier series; values are
    validated into (0, 1).  JSON schema (list, one entry per velocity):

        [{"v": [1.0], "value": 0.8},
         {"v": [-1.0], "fourier": {"const": 0.5,
                                   "cos": [[[1], 0.1]], "sin": []}}]
    """

    def __init__(self, model: VelocityModel, entries):
        self.model = model
        self._funcs = {}
        for entry in entries:
            idx = model.index_of(entry["v"])
            if "value" in entry:
                val = float(entry["value"])
                if not 0.0 < val < 1.0:
                    raise ProfileOutOfRange(
                        f"reservoir density {val} for velocity {entry['v']} "
                        "outside (0,1)")
                self._funcs[idx] = val
            elif "fourier" in entry:
                self._funcs[idx] = _fourier_profile(entry["fourier"], model.dim - 1)
            else:
                raise ValueError(f"profile entry needs 'value' or 'fourier': {entry}")
        missing = set(range(model.n_velocities)) - set(self._funcs)
        if missing:
            vs = [model.velocities[i] for i in sorted(missing)]
            raise ValueError(f"no reservoir density given for velocities {vs}")

    @classmethod
    def constant(cls, model: VelocityModel, values):
        """values: mapping velocity-index -> density, or a single float."""
        if np.isscalar(values):
            values = {i: float(values) for i in range(model.n_velocities)}
        entries = [{"v": model.velocities[i], "value": values[i]}
                   for i in range(model.n_velocities)]
        return cls(model, entries)

    @classmethod
    def from_json(cls, model: VelocityModel, path):
        with open(path) as fh:
            return cls(model, json.load(fh))

    def value(self, vidx: int, u_tilde=()):
        f = self._funcs[vidx]
        return f(u_tilde) if callable(f) else f

    def __getitem__(self, vidx):
        return self._funcs[vidx]

    def data(self, u_tilde=()):
        """Boundary data vector d(u) at transverse coordinate u_tilde."""
        return boundary_data(self._funcs, self.model)(u_tilde)


def _fourier_profile(spec, dtrans: int):
    const = float(spec.get("const", 0.5))
    cos_terms = [(tuple(k), float(c)) for k, c in spec.get("cos", [])]
    sin_terms = [(tuple(k), float(c)) for k, c in spec.get("sin", [])]

    def f(u_tilde):
        u = np.atleast_1d(np.asarray(u_tilde, dtype=float))
        val = const
        for k, c in cos_terms:
            val += c * math.cos(2 * math.pi * np.dot(k, u[:len(k)]))
        for k, c in sin_terms:
            val += c * math.sin(2 * math.pi * np.dot(k, u[:len(k)]))
        return val

    # validate range on a transverse grid
    if dtrans == 0:
        vals = [f(())]
    else:
        grid = np.linspace(0, 1, 33)[:-1]
        import itertools as it
        vals = [f(pt) for pt in it.product(grid, repeat=dtrans)]
    if min(vals) <= 0.0 or max(vals) >= 1.0:
        raise ProfileOutOfRange(
            f"Fourier reservoir profile leaves (0,1): range "
            f"[{min(vals):.4f}, {max(vals):.4f}]")
    return f
