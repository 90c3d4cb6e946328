"""Pure-Python event-loop kernel.

Reference implementation of the continuous-time Markov dynamics: exact
Gillespie sampling over the clock table with a binary sum tree for event
selection.  The compiled kernel (core.pyx) is a line-for-line
transliteration; given the same seed and stream the two produce
bit-identical trajectories, which the test suite asserts.

Design notes shared by both kernels:

  * Event selection: leaf rates live at tree[cap + c]; each internal
    node stores the sum of its two children.  Updating a leaf recomputes
    every ancestor as the sum of its children, so the tree is always a
    pure function of the current leaf values and cannot drift.
  * Waiting times: dt = -log(1 - u) / total with u the next uniform of
    the Philox stream; one more uniform picks the clock.  The draw that
    overshoots a time barrier is consumed (memorylessness makes the
    restart exact in law).
  * Observable accumulators: for installed weight vectors w the kernel
    maintains A = sum_c rate_c w_c sign_c (sign flips with the occupancy
    for boundary clocks) and integrates A dt along the trajectory, which
    yields the generator term of Dynkin's formula exactly, with no time
    discretization error.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import PhiloxStream

STATUS_TIME = 0
STATUS_EVENTS = 1
STATUS_ABSORBED = 2


class PyKernel:
    backend = "python"

    def __init__(self, tables, bits: np.ndarray, seed: int, stream: int = 0):
        self.tables = tables
        if bits.dtype != np.uint8 or bits.ndim != 1:
            raise ValueError("bits must be a flat uint8 array")
        self.bits = bits
        self.rng = PhiloxStream(seed, stream)
        self.t = 0.0
        self.events = 0
        self.counters = np.zeros(6, dtype=np.int64)
        self.last_event = -1

        n = tables.n_clocks
        cap = 1
        while cap < max(n, 1):
            cap *= 2
        self.cap = cap
        self.tree = np.zeros(2 * cap, dtype=np.float64)
        self.n_obs = 0
        self.w0 = None
        self.contrib = None
        self.obs_value = np.zeros(0)
        self.obs_integral = np.zeros(0)
        self._rebuild()

    # -- observables ------------------------------------------------------

    def install_observables(self, w0: np.ndarray) -> None:
        w0 = np.ascontiguousarray(w0, dtype=np.float64)
        if w0.ndim != 2 or w0.shape[1] != self.tables.n_clocks:
            raise ValueError("weights must have shape (n_obs, n_clocks)")
        self.n_obs = w0.shape[0]
        self.w0 = w0
        self.contrib = np.zeros_like(w0)
        self.obs_value = np.zeros(self.n_obs)
        self.obs_integral = np.zeros(self.n_obs)
        for c in range(self.tables.n_clocks):
            r = self.tree[self.cap + c]
            s = self._sign(c)
            for o in range(self.n_obs):
                val = r * self.w0[o, c] * s
                self.contrib[o, c] = val
                self.obs_value[o] += val

    def _sign(self, c: int) -> float:
        t = self.tables
        j = c - t.n_ex - t.n_coll
        if j >= 0:
            b = t.bnd_site[j] * t.n_v + t.bnd_v[j]
            if self.bits[b]:
                return -1.0
        return 1.0

    # -- rate bookkeeping --------------------------------------------------

    def _rebuild(self) -> None:
        t = self.tables
        self.tree[:] = 0.0
        for c in range(t.n_clocks):
            self.tree[self.cap + c] = t.clock_rate(c, self.bits)
        for i in range(self.cap - 1, 0, -1):
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]

    def _set_rate(self, c: int, r: float) -> None:
        i = self.cap + c
        self.tree[i] = r
        i >>= 1
        while i >= 1:
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]
            i >>= 1

    def _refresh_clock(self, c: int) -> None:
        r = self.tables.clock_rate(c, self.bits)
        self._set_rate(c, r)
        if self.n_obs:
            s = self._sign(c)
            for o in range(self.n_obs):
                val = r * self.w0[o, c] * s
                self.obs_value[o] += val - self.contrib[o, c]
                self.contrib[o, c] = val

    def _sample_clock(self, target: float) -> int:
        node = 1
        while node < self.cap:
            node <<= 1
            left = self.tree[node]
            if target >= left:
                target -= left
                node += 1
        c = node - self.cap
        # float roundoff can land on an empty leaf; walk to the next live one
        while self.tree[self.cap + c] == 0.0:
            c = (c + 1) % self.tables.n_clocks
        return c

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def leaf_rates(self) -> np.ndarray:
        return self.tree[self.cap:self.cap + self.tables.n_clocks].copy()

    # -- event loop ---------------------------------------------------------

    def advance(self, t_end: float, max_events: int = -1) -> int:
        t = self.tables
        tree = self.tree
        bits = self.bits
        uniform = self.rng.uniform
        now = self.t
        done = 0
        while True:
            if max_events >= 0 and done >= max_events:
                self.t = now
                return STATUS_EVENTS
            total = tree[1]
            if total <= 0.0:
                if t_end != math.inf:
                    self._integrate(t_end - now)
                self.t = t_end
                return STATUS_ABSORBED
            dt = -math.log(1.0 - uniform()) / total
            if now + dt > t_end:
                self._integrate(t_end - now)
                self.t = t_end
                return STATUS_TIME
            self._integrate(dt)
            now += dt
            c = self._sample_clock(uniform() * total)
            self.last_event = c
            flipped = t.apply_event(c, bits)
            self._count_event(c)
            for b in flipped:
                for a in t.aff_clk[t.aff_off[b]:t.aff_off[b + 1]]:
                    self._refresh_clock(int(a))
            self.events += 1
            done += 1

    def _integrate(self, dt: float) -> None:
        for o in range(self.n_obs):
            self.obs_integral[o] += self.obs_value[o] * dt

    def _count_event(self, c: int) -> None:
        t = self.tables
        if c < t.n_ex:
            self.counters[0] += 1
        elif c < t.n_ex + t.n_coll:
            self.counters[1] += 1
        else:
            j = c - t.n_ex - t.n_coll
            b = t.bnd_site[j] * t.n_v + t.bnd_v[j]
            was = 1 - self.bits[b]  # apply_event already flipped it
            self.counters[2 + 2 * t.bnd_side[j] + was] += 1
