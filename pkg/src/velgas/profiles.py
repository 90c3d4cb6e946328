"""Initial density/momentum profile specifications.

One spec per component, evaluated at macroscopic positions; used both to
sample initial lattice configurations and as PDE initial data so the two
sides of a convergence experiment start from the same profile.  JSON
form (d = 1 shown):

    {"rho": {"kind": "linear", "left": 1.4, "right": 0.6},
     "momentum": [{"kind": "constant", "value": 0.1}]}

kinds: constant {value}, linear {left, right}, sine {base, amplitude,
frequency} meaning base + amplitude sin(2 pi frequency u_1).
"""

from __future__ import annotations

import json

import numpy as np


def _component(spec):
    kind = spec["kind"]
    if kind == "constant":
        val = float(spec["value"])
        return lambda u1: val
    if kind == "linear":
        a, b = float(spec["left"]), float(spec["right"])
        return lambda u1: a + (b - a) * u1
    if kind == "sine":
        base = float(spec["base"])
        amp = float(spec["amplitude"])
        freq = float(spec.get("frequency", 1.0))
        return lambda u1: base + amp * np.sin(2 * np.pi * freq * u1)
    raise ValueError(f"unknown profile kind {kind!r}")


class InitialProfile:
    """Callable u -> (rho, mom_1, ..., mom_d) built from per-component specs."""

    def __init__(self, rho_spec, momentum_specs):
        self.spec = {"rho": rho_spec, "momentum": list(momentum_specs)}
        self._rho = _component(rho_spec)
        self._mom = [_component(s) for s in momentum_specs]

    @property
    def dim(self) -> int:
        return len(self._mom)

    def __call__(self, u) -> np.ndarray:
        u1 = float(np.atleast_1d(u)[0])
        return np.array([self._rho(u1)] + [m(u1) for m in self._mom])

    @classmethod
    def from_dict(cls, data) -> "InitialProfile":
        return cls(data["rho"], data["momentum"])

    @classmethod
    def from_json(cls, path) -> "InitialProfile":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def linear(cls, left, right) -> "InitialProfile":
        """Componentwise linear interpolation between two (d+1)-vectors."""
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        rho = {"kind": "linear", "left": left[0], "right": right[0]}
        mom = [{"kind": "linear", "left": left[k], "right": right[k]}
               for k in range(1, len(left))]
        return cls(rho, mom)

    @classmethod
    def constant(cls, values) -> "InitialProfile":
        values = np.asarray(values, dtype=float)
        return cls({"kind": "constant", "value": values[0]},
                   [{"kind": "constant", "value": v} for v in values[1:]])
