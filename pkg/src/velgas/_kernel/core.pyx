# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event-loop kernel.

Transliteration of pykernel.PyKernel: same Philox-4x64-10 stream, same
sum tree, same update order, so trajectories match the pure-Python kernel
bit for bit.  See pykernel.py for the design notes.
"""

from libc.math cimport log

import numpy as np

ctypedef unsigned long long u64
ctypedef unsigned char u8

cdef extern from *:
    ctypedef unsigned long long u128 "__uint128_t"

cdef u64 PHILOX_M0 = 0xD2E7470EE14C6C93ULL
cdef u64 PHILOX_M1 = 0xCA5A826395121157ULL
cdef u64 PHILOX_W0 = 0x9E3779B97F4A7C15ULL
cdef u64 PHILOX_W1 = 0xBB67AE8584CAA73BULL
cdef double INV53 = 1.0 / 9007199254740992.0

STATUS_TIME = 0
STATUS_EVENTS = 1
STATUS_ABSORBED = 2


cdef class CKernel:
    cdef readonly object tables
    cdef readonly object bits_array
    cdef u8[::1] bits
    cdef double[::1] tree
    cdef Py_ssize_t cap, n_clocks, n_ex, n_coll, n_bnd, n_v
    cdef double coll_base
    cdef int[::1] ex_src, ex_tgt, ex_v
    cdef double[::1] ex_base
    cdef int[::1] coll_site, coll_rule
    cdef int[:, ::1] rule_v
    cdef int[::1] bnd_site, bnd_v
    cdef double[::1] bnd_ins, bnd_rem
    cdef u8[::1] bnd_side
    cdef long long[::1] aff_off
    cdef int[::1] aff_clk
    cdef long long[::1] counters_view
    cdef readonly object counters
    cdef readonly double t
    cdef readonly long long events
    cdef readonly long long last_event
    # observables
    cdef Py_ssize_t n_obs
    cdef double[:, ::1] w0, contrib
    cdef double[::1] obs_value_v, obs_integral_v
    cdef readonly object obs_value, obs_integral
    # philox state
    cdef u64 k0, k1, ctr
    cdef u64 buf[4]
    cdef Py_ssize_t pos

    backend = "compiled"

    def __init__(self, tables, bits, seed, stream=0):
        from ..rng import derive_key
        if bits.dtype != np.uint8 or bits.ndim != 1:
            raise ValueError("bits must be a flat uint8 array")
        self.tables = tables
        self.bits_array = bits
        self.bits = bits
        self.n_clocks = tables.n_clocks
        self.n_ex = tables.n_ex
        self.n_coll = tables.n_coll
        self.n_bnd = tables.n_bnd
        self.n_v = tables.n_v
        self.coll_base = tables.coll_base
        self.ex_src = tables.ex_src
        self.ex_tgt = tables.ex_tgt
        self.ex_v = tables.ex_v
        self.ex_base = tables.ex_base
        self.coll_site = tables.coll_site
        self.coll_rule = tables.coll_rule
        self.rule_v = np.ascontiguousarray(tables.rule_velocities)
        self.bnd_site = tables.bnd_site
        self.bnd_v = tables.bnd_v
        self.bnd_ins = tables.bnd_ins
        self.bnd_rem = tables.bnd_rem
        self.bnd_side = tables.bnd_side
        self.aff_off = tables.aff_off
        self.aff_clk = tables.aff_clk

        cdef Py_ssize_t cap = 1
        while cap < max(self.n_clocks, 1):
            cap *= 2
        self.cap = cap
        tree = np.zeros(2 * cap, dtype=np.float64)
        self.tree = tree

        self.counters = np.zeros(6, dtype=np.int64)
        self.counters_view = self.counters
        self.t = 0.0
        self.events = 0
        self.last_event = -1

        k0, k1 = derive_key(int(seed), int(stream))
        self.k0 = <u64> k0
        self.k1 = <u64> k1
        self.ctr = 0
        self.pos = 4

        self.n_obs = 0
        self.obs_value = np.zeros(0)
        self.obs_integral = np.zeros(0)
        self._rebuild()

    # -- philox -----------------------------------------------------------

    cdef inline void _block(self):
        cdef u64 c0 = self.ctr, c1 = 0, c2 = 0, c3 = 0
        cdef u64 k0 = self.k0, k1 = self.k1
        cdef u64 hi0, lo0, hi1, lo1
        cdef u128 p0, p1
        cdef int r
        for r in range(10):
            p0 = (<u128> PHILOX_M0) * c0
            p1 = (<u128> PHILOX_M1) * c2
            hi0 = <u64> (p0 >> 64)
            lo0 = <u64> p0
            hi1 = <u64> (p1 >> 64)
            lo1 = <u64> p1
            c0 = hi1 ^ c1 ^ k0
            c1 = lo1
            c2 = hi0 ^ c3 ^ k1
            c3 = lo0
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
        self.buf[0] = c0
        self.buf[1] = c1
        self.buf[2] = c2
        self.buf[3] = c3

    cdef inline double _uniform(self):
        cdef u64 w
        if self.pos == 4:
            self.ctr += 1
            self._block()
            self.pos = 0
        w = self.buf[self.pos]
        self.pos += 1
        return <double> (w >> 11) * INV53

    # -- rate bookkeeping ---------------------------------------------------

    cdef inline double _rate(self, Py_ssize_t c):
        cdef Py_ssize_t j, y, b
        cdef int q0, q1, q2, q3
        if c < self.n_ex:
            if self.bits[self.ex_src[c] * self.n_v + self.ex_v[c]] and \
                    not self.bits[self.ex_tgt[c] * self.n_v + self.ex_v[c]]:
                return self.ex_base[c]
            return 0.0
        j = c - self.n_ex
        if j < self.n_coll:
            y = self.coll_site[j] * self.n_v
            q0 = self.rule_v[self.coll_rule[j], 0]
            q1 = self.rule_v[self.coll_rule[j], 1]
            q2 = self.rule_v[self.coll_rule[j], 2]
            q3 = self.rule_v[self.coll_rule[j], 3]
            if self.bits[y + q0] and self.bits[y + q1] and \
                    not self.bits[y + q2] and not self.bits[y + q3]:
                return self.coll_base
            return 0.0
        j -= self.n_coll
        b = self.bnd_site[j] * self.n_v + self.bnd_v[j]
        if self.bits[b]:
            return self.bnd_rem[j]
        return self.bnd_ins[j]

    cdef inline double _sign(self, Py_ssize_t c):
        cdef Py_ssize_t j = c - self.n_ex - self.n_coll
        if j >= 0:
            if self.bits[self.bnd_site[j] * self.n_v + self.bnd_v[j]]:
                return -1.0
        return 1.0

    cdef void _rebuild(self):
        cdef Py_ssize_t c, i
        for i in range(2 * self.cap):
            self.tree[i] = 0.0
        for c in range(self.n_clocks):
            self.tree[self.cap + c] = self._rate(c)
        for i in range(self.cap - 1, 0, -1):
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]

    cdef inline void _set_rate(self, Py_ssize_t c, double r):
        cdef Py_ssize_t i = self.cap + c
        self.tree[i] = r
        i >>= 1
        while i >= 1:
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]
            i >>= 1

    cdef inline void _refresh_clock(self, Py_ssize_t c):
        cdef double r = self._rate(c)
        cdef double s, val
        cdef Py_ssize_t o
        self._set_rate(c, r)
        if self.n_obs:
            s = self._sign(c)
            for o in range(self.n_obs):
                val = r * self.w0[o, c] * s
                self.obs_value_v[o] += val - self.contrib[o, c]
                self.contrib[o, c] = val

    cdef inline Py_ssize_t _sample_clock(self, double target):
        cdef Py_ssize_t node = 1
        cdef double left
        while node < self.cap:
            node <<= 1
            left = self.tree[node]
            if target >= left:
                target -= left
                node += 1
        cdef Py_ssize_t c = node - self.cap
        while self.tree[self.cap + c] == 0.0:
            c = (c + 1) % self.n_clocks
        return c

    def install_observables(self, w0):
        w0 = np.ascontiguousarray(w0, dtype=np.float64)
        if w0.ndim != 2 or w0.shape[1] != self.n_clocks:
            raise ValueError("weights must have shape (n_obs, n_clocks)")
        self.n_obs = w0.shape[0]
        self.w0 = w0
        self.contrib = np.zeros_like(w0)
        self.obs_value = np.zeros(self.n_obs)
        self.obs_integral = np.zeros(self.n_obs)
        self.obs_value_v = self.obs_value
        self.obs_integral_v = self.obs_integral
        cdef Py_ssize_t c, o
        cdef double r, s, val
        for c in range(self.n_clocks):
            r = self.tree[self.cap + c]
            s = self._sign(c)
            for o in range(self.n_obs):
                val = r * self.w0[o, c] * s
                self.contrib[o, c] = val
                self.obs_value_v[o] += val

    @property
    def total_rate(self):
        return self.tree[1]

    def leaf_rates(self):
        return np.asarray(self.tree[self.cap:self.cap + self.n_clocks]).copy()

    cdef inline void _integrate(self, double dt):
        cdef Py_ssize_t o
        for o in range(self.n_obs):
            self.obs_integral_v[o] += self.obs_value_v[o] * dt

    cdef inline void _count_event(self, Py_ssize_t c):
        cdef Py_ssize_t j, b, was
        if c < self.n_ex:
            self.counters_view[0] += 1
        elif c < self.n_ex + self.n_coll:
            self.counters_view[1] += 1
        else:
            j = c - self.n_ex - self.n_coll
            b = self.bnd_site[j] * self.n_v + self.bnd_v[j]
            was = 1 - self.bits[b]
            self.counters_view[2 + 2 * self.bnd_side[j] + was] += 1

    cdef inline void _apply_and_refresh(self, Py_ssize_t c):
        cdef Py_ssize_t j, y, b, i, nflip
        cdef Py_ssize_t flipped[4]
        cdef int q0, q1, q2, q3
        cdef long long a
        if c < self.n_ex:
            flipped[0] = self.ex_src[c] * self.n_v + self.ex_v[c]
            flipped[1] = self.ex_tgt[c] * self.n_v + self.ex_v[c]
            self.bits[flipped[0]] = 0
            self.bits[flipped[1]] = 1
            nflip = 2
        else:
            j = c - self.n_ex
            if j < self.n_coll:
                y = self.coll_site[j] * self.n_v
                q0 = self.rule_v[self.coll_rule[j], 0]
                q1 = self.rule_v[self.coll_rule[j], 1]
                q2 = self.rule_v[self.coll_rule[j], 2]
                q3 = self.rule_v[self.coll_rule[j], 3]
                flipped[0] = y + q0
                flipped[1] = y + q1
                flipped[2] = y + q2
                flipped[3] = y + q3
                self.bits[flipped[0]] = 0
                self.bits[flipped[1]] = 0
                self.bits[flipped[2]] = 1
                self.bits[flipped[3]] = 1
                nflip = 4
            else:
                j -= self.n_coll
                b = self.bnd_site[j] * self.n_v + self.bnd_v[j]
                self.bits[b] ^= 1
                flipped[0] = b
                nflip = 1
        self._count_event(c)
        for i in range(nflip):
            b = flipped[i]
            for a in range(self.aff_off[b], self.aff_off[b + 1]):
                self._refresh_clock(self.aff_clk[a])

    def advance(self, double t_end, long long max_events=-1):
        cdef double now = self.t
        cdef double total, dt, u
        cdef Py_ssize_t c
        cdef long long done = 0
        while True:
            if max_events >= 0 and done >= max_events:
                self.t = now
                return STATUS_EVENTS
            total = self.tree[1]
            if total <= 0.0:
                self._integrate(t_end - now)
                self.t = t_end
                return STATUS_ABSORBED
            u = self._uniform()
            dt = -log(1.0 - u) / total
            if now + dt > t_end:
                self._integrate(t_end - now)
                self.t = t_end
                return STATUS_TIME
            self._integrate(dt)
            now += dt
            u = self._uniform()
            c = self._sample_clock(u * total)
            self.last_event = c
            self._apply_and_refresh(c)
            self.events += 1
            done += 1
