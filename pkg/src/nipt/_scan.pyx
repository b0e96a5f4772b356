"""Compiled candidate-window scan kernel.

This file and ``nipt._scan_py`` implement the same algorithm statement for
statement; the build compiles this one with -ffp-contract=off so both produce
bit-identical float results. Keep every arithmetic expression in sync with
the pure twin when editing either.

State is per detector segment (between window resets). For segment sample
count r, prefix index u in [0, r] describes the window holding samples
u+1..r (u = r is the empty window). The scan statistic is

    S = max(0, max_u  W(u)),
    W(u) = sum_j V_j(u) - n * kappa,     n = r - u,

with V_j the per-sensor window term computed from prefix-sum channels:
mean statistics use one channel (running per-symbol score sum), variance
statistics two (running sums of the symbol values and their squares).

Pruning: each per-sensor statistic is concave, so its tangent plane at the
pre-change pmf overestimates it. Summing tangent per-symbol scores gives a
scalar prefix sequence R with W(u) <= R[r] - R[u] for every u. Blocks of 64
consecutive R entries carry their minimum, and completed blocks a running
prefix minimum, so whole stretches of candidates provably below the current
best are skipped without touching them. The bound is compared against
best - MARGIN; MARGIN absorbs the float rounding gap between the two
computation routes (see the constant's comment), so pruned candidates can
never tie or beat the running best and the returned (S, argmax) equal the
unpruned scan's exactly.
"""

import numpy as np

# Float-error budget for the pruning comparison. The prefix sums accumulate
# at most ~len * eps * max|R| of rounding per entry; for len 1e6 and |R| in
# the 1e5 range the bound-vs-window discrepancy stays below ~1e-6. 1e-4
# leaves two orders of headroom and costs only the exact evaluation of
# candidates within 1e-4 of the running best.
MARGIN = 1e-4

KIND_MEAN = 0
KIND_VARIANCE = 1


cdef class ScanKernel:
    cdef public Py_ssize_t n_sensors, n_chan, capacity, r
    cdef public Py_ssize_t window_cap      # 0 means unlimited
    cdef public double kappa
    cdef public double last_S
    cdef public Py_ssize_t last_u, last_n
    cdef int[::1] kinds, chan0
    cdef double[::1] cst
    cdef double[:, ::1] vt
    cdef double[:, ::1] ts
    cdef double[:, ::1] P
    cdef double[::1] R
    cdef double[::1] minR, prefmin
    cdef object _store

    def __init__(self, kinds, chan0, vt, ts, cst, double kappa,
                 Py_ssize_t capacity, Py_ssize_t window_cap=0):
        self.kinds = np.ascontiguousarray(kinds, dtype=np.int32)
        self.chan0 = np.ascontiguousarray(chan0, dtype=np.int32)
        self.vt = np.ascontiguousarray(vt, dtype=np.float64)
        self.ts = np.ascontiguousarray(ts, dtype=np.float64)
        self.cst = np.ascontiguousarray(cst, dtype=np.float64)
        self.kappa = kappa
        self.n_sensors = self.kinds.shape[0]
        self.n_chan = self.vt.shape[0]
        self.window_cap = window_cap
        self._allocate(capacity)
        self.reset()

    def _allocate(self, Py_ssize_t capacity):
        nblocks = (capacity >> 6) + 2
        store = {
            "P": np.zeros((capacity + 1, self.n_chan), dtype=np.float64),
            "R": np.zeros(capacity + 1, dtype=np.float64),
            "minR": np.zeros(nblocks, dtype=np.float64),
            "prefmin": np.zeros(nblocks, dtype=np.float64),
        }
        self._store = store
        self.P = store["P"]
        self.R = store["R"]
        self.minR = store["minR"]
        self.prefmin = store["prefmin"]
        self.capacity = capacity

    def grow(self, Py_ssize_t new_capacity):
        if new_capacity <= self.capacity:
            raise ValueError("grow() needs a larger capacity")
        old = self._store
        r = self.r
        self._allocate(new_capacity)
        self._store["P"][: r + 1] = old["P"][: r + 1]
        self._store["R"][: r + 1] = old["R"][: r + 1]
        nb = (r >> 6) + 1
        self._store["minR"][:nb] = old["minR"][:nb]
        self._store["prefmin"][:nb] = old["prefmin"][:nb]

    cpdef reset(self):
        cdef Py_ssize_t c
        self.r = 0
        for c in range(self.n_chan):
            self.P[0, c] = 0.0
        self.R[0] = 0.0
        self.minR[0] = 0.0
        self.last_S = 0.0
        self.last_u = 0
        self.last_n = 0

    cdef void _push(self, const int[::1] x):
        cdef Py_ssize_t r1 = self.r + 1
        cdef Py_ssize_t j, c, b, sym
        cdef double tacc = 0.0
        for j in range(self.n_sensors):
            sym = x[j]
            c = self.chan0[j]
            self.P[r1, c] = self.P[r1 - 1, c] + self.vt[c, sym]
            if self.kinds[j] == KIND_VARIANCE:
                self.P[r1, c + 1] = self.P[r1 - 1, c + 1] + self.vt[c + 1, sym]
            tacc = tacc + self.ts[j, sym]
        self.R[r1] = self.R[r1 - 1] + (tacc - self.kappa)
        b = r1 >> 6
        if (r1 & 63) == 0:
            if b == 1:
                self.prefmin[0] = self.minR[0]
            else:
                self.prefmin[b - 1] = min(self.prefmin[b - 2], self.minR[b - 1])
            self.minR[b] = self.R[r1]
        else:
            if self.R[r1] < self.minR[b]:
                self.minR[b] = self.R[r1]
        self.r = r1

    cdef void _scan(self):
        cdef Py_ssize_t r = self.r
        cdef double best = 0.0
        cdef Py_ssize_t bestu = r
        cdef double Rr = self.R[r]
        cdef double kappa = self.kappa
        cdef Py_ssize_t u_hi = r - 1
        cdef Py_ssize_t u_floor = 0
        cdef Py_ssize_t b, lo, u, j, c
        cdef double n_f, W, A, B, term
        if self.window_cap > 0 and r - self.window_cap > 0:
            u_floor = r - self.window_cap
        while u_hi >= u_floor:
            b = u_hi >> 6
            lo = b << 6
            if lo < u_floor:
                lo = u_floor
            if Rr - self.minR[b] >= best - MARGIN:
                for u in range(u_hi, lo - 1, -1):
                    n_f = <double> (r - u)
                    W = -n_f * kappa
                    for j in range(self.n_sensors):
                        c = self.chan0[j]
                        if self.kinds[j] == KIND_MEAN:
                            term = (self.P[r, c] - self.P[u, c]) - n_f * self.cst[j]
                        else:
                            A = self.P[r, c] - self.P[u, c]
                            B = self.P[r, c + 1] - self.P[u, c + 1]
                            term = B - A * A / n_f - n_f * self.cst[j]
                        W = W + term
                    if W >= best:
                        best = W
                        bestu = u
            if b == 0 or lo == u_floor:
                break
            if Rr - self.prefmin[b - 1] < best - MARGIN:
                break
            u_hi = lo - 1
        self.last_S = best
        self.last_u = bestu
        self.last_n = r - bestu

    def step(self, x):
        """Push one sample (int32 per sensor) and rescan; returns (S, u, n)."""
        cdef const int[::1] xv = np.ascontiguousarray(x, dtype=np.int32)
        if self.r >= self.capacity:
            raise RuntimeError("scan kernel capacity exhausted; call grow()")
        self._push(xv)
        self._scan()
        return self.last_S, self.last_u, self.last_n

    def run(self, X, double threshold, Py_ssize_t max_rows=-1):
        """Consume rows of X until the scan statistic reaches threshold.

        Returns (status, rows_used, S, u): status 1 = crossed (the crossing
        row is consumed), 0 = all rows consumed without crossing, 2 = kernel
        capacity reached (caller grows and resumes with the remaining rows).
        """
        cdef const int[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.int32)
        cdef Py_ssize_t rows = Xv.shape[0]
        cdef Py_ssize_t i
        if max_rows >= 0 and max_rows < rows:
            rows = max_rows
        for i in range(rows):
            if self.r >= self.capacity:
                return 2, i, self.last_S, self.last_u
            self._push(Xv[i])
            self._scan()
            if self.last_S >= threshold:
                return 1, i + 1, self.last_S, self.last_u
        return 0, rows, self.last_S, self.last_u
