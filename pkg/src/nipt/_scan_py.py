"""Pure-Python twin of the compiled scan kernel.

``PyScanKernel`` mirrors ``nipt._scan.ScanKernel`` statement for statement;
the arithmetic (operation order, parenthesization) must stay identical so
both engines produce bit-identical results (the extension is compiled with
float contraction off for the same reason). See the .pyx module docstring
for the algorithm. Keep the two in sync when editing either.

``GenericScanKernel`` handles custom statistics that have no prefix-channel
form; it maintains per-sensor count prefixes and evaluates windows through
the statistic's pmf interface. Same pruning rule, no bitwise twin.
"""

from __future__ import annotations

import numpy as np

from .distributions import Pmf

MARGIN = 1e-4  # must equal nipt._scan.MARGIN

KIND_MEAN = 0
KIND_VARIANCE = 1


class PyScanKernel:
    """See ScanKernel in the compiled module; public surface is identical."""

    def __init__(self, kinds, chan0, vt, ts, cst, kappa, capacity, window_cap=0):
        self.kinds = np.ascontiguousarray(kinds, dtype=np.int32)
        self.chan0 = np.ascontiguousarray(chan0, dtype=np.int32)
        self.vt = np.ascontiguousarray(vt, dtype=np.float64)
        self.ts = np.ascontiguousarray(ts, dtype=np.float64)
        self.cst = np.ascontiguousarray(cst, dtype=np.float64)
        self.kappa = float(kappa)
        self.n_sensors = len(self.kinds)
        self.n_chan = self.vt.shape[0]
        self.window_cap = int(window_cap)
        self._allocate(int(capacity))
        self.reset()

    def _allocate(self, capacity):
        nblocks = (capacity >> 6) + 2
        self.P = np.zeros((capacity + 1, self.n_chan), dtype=np.float64)
        self.R = np.zeros(capacity + 1, dtype=np.float64)
        self.minR = np.zeros(nblocks, dtype=np.float64)
        self.prefmin = np.zeros(nblocks, dtype=np.float64)
        self.capacity = capacity

    def grow(self, new_capacity):
        if new_capacity <= self.capacity:
            raise ValueError("grow() needs a larger capacity")
        old_P, old_R = self.P, self.R
        old_minR, old_prefmin = self.minR, self.prefmin
        r = self.r
        self._allocate(new_capacity)
        self.P[: r + 1] = old_P[: r + 1]
        self.R[: r + 1] = old_R[: r + 1]
        nb = (r >> 6) + 1
        self.minR[:nb] = old_minR[:nb]
        self.prefmin[:nb] = old_prefmin[:nb]

    def reset(self):
        self.r = 0
        for c in range(self.n_chan):
            self.P[0, c] = 0.0
        self.R[0] = 0.0
        self.minR[0] = 0.0
        self.last_S = 0.0
        self.last_u = 0
        self.last_n = 0

    def _push(self, x):
        r1 = self.r + 1
        P, vt, ts = self.P, self.vt, self.ts
        tacc = 0.0
        for j in range(self.n_sensors):
            sym = x[j]
            c = self.chan0[j]
            P[r1, c] = P[r1 - 1, c] + vt[c, sym]
            if self.kinds[j] == KIND_VARIANCE:
                P[r1, c + 1] = P[r1 - 1, c + 1] + vt[c + 1, sym]
            tacc = tacc + ts[j, sym]
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

    def _scan(self):
        r = self.r
        P = self.P
        kinds, chan0, cst = self.kinds, self.chan0, self.cst
        best = 0.0
        bestu = r
        Rr = self.R[r]
        kappa = self.kappa
        u_hi = r - 1
        u_floor = 0
        if self.window_cap > 0 and r - self.window_cap > 0:
            u_floor = r - self.window_cap
        while u_hi >= u_floor:
            b = u_hi >> 6
            lo = b << 6
            if lo < u_floor:
                lo = u_floor
            if Rr - self.minR[b] >= best - MARGIN:
                for u in range(u_hi, lo - 1, -1):
                    n_f = float(r - u)
                    W = -n_f * kappa
                    for j in range(self.n_sensors):
                        c = chan0[j]
                        if kinds[j] == KIND_MEAN:
                            term = (P[r, c] - P[u, c]) - n_f * cst[j]
                        else:
                            A = P[r, c] - P[u, c]
                            B = P[r, c + 1] - P[u, c + 1]
                            term = B - A * A / n_f - n_f * cst[j]
                        W = W + term
                    if W >= best:
                        best = W
                        bestu = u
            if b == 0 or lo == u_floor:
                break
            if Rr - self.prefmin[b - 1] < best - MARGIN:
                break
            u_hi = lo - 1
        self.last_S = float(best)
        self.last_u = bestu
        self.last_n = r - bestu

    def step(self, x):
        x = np.ascontiguousarray(x, dtype=np.int32)
        if self.r >= self.capacity:
            raise RuntimeError("scan kernel capacity exhausted; call grow()")
        self._push(x)
        self._scan()
        return self.last_S, self.last_u, self.last_n

    def run(self, X, threshold, max_rows=-1):
        X = np.ascontiguousarray(X, dtype=np.int32)
        rows = X.shape[0]
        if 0 <= max_rows < rows:
            rows = max_rows
        for i in range(rows):
            if self.r >= self.capacity:
                return 2, i, self.last_S, self.last_u
            self._push(X[i])
            self._scan()
            if self.last_S >= threshold:
                return 1, i + 1, self.last_S, self.last_u
        return 0, rows, self.last_S, self.last_u


class GenericScanKernel:
    """Count-prefix scan for models with custom statistics.

    Same scan semantics and pruning rule; window values are evaluated
    through each statistic's pmf interface, so this is the slow but fully
    general path.
    """

    def __init__(self, model, kappa, capacity, window_cap=0):
        self.model = model
        self.kappa = float(kappa)
        self.sizes = model.sizes
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)
        self.total_m = int(self.offsets[-1])
        # per-sample tangent score lookup, one row per sensor
        self.ts = [
            s.statistic.tangent_scores(s.f0) for s in model.sensors
        ]
        self.window_cap = int(window_cap)
        self._allocate(int(capacity))
        self.reset()

    def _allocate(self, capacity):
        nblocks = (capacity >> 6) + 2
        self.C = np.zeros((capacity + 1, self.total_m), dtype=np.int64)
        self.R = np.zeros(capacity + 1, dtype=np.float64)
        self.minR = np.zeros(nblocks, dtype=np.float64)
        self.prefmin = np.zeros(nblocks, dtype=np.float64)
        self.capacity = capacity

    def grow(self, new_capacity):
        if new_capacity <= self.capacity:
            raise ValueError("grow() needs a larger capacity")
        old_C, old_R = self.C, self.R
        old_minR, old_prefmin = self.minR, self.prefmin
        r = self.r
        self._allocate(new_capacity)
        self.C[: r + 1] = old_C[: r + 1]
        self.R[: r + 1] = old_R[: r + 1]
        nb = (r >> 6) + 1
        self.minR[:nb] = old_minR[:nb]
        self.prefmin[:nb] = old_prefmin[:nb]

    def reset(self):
        self.r = 0
        self.C[0, :] = 0
        self.R[0] = 0.0
        self.minR[0] = 0.0
        self.last_S = 0.0
        self.last_u = 0
        self.last_n = 0

    def window_value(self, u):
        """W(u) for the current r; the definitional reference uses this too."""
        r = self.r
        n = r - u
        n_f = float(n)
        q_total = 0.0
        inv = 1.0 / n_f
        for j, sensor in enumerate(self.model.sensors):
            c0, c1 = self.offsets[j], self.offsets[j + 1]
            counts = self.C[r, c0:c1] - self.C[u, c0:c1]
            q_total = q_total + sensor.statistic(Pmf(sensor.alphabet, counts * inv))
        return n_f * (q_total - self.kappa)

    def _push(self, x):
        r1 = self.r + 1
        self.C[r1, :] = self.C[r1 - 1, :]
        tacc = 0.0
        for j in range(len(self.sizes)):
            sym = int(x[j])
            self.C[r1, self.offsets[j] + sym] += 1
            tacc = tacc + self.ts[j][sym]
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

    def _scan(self):
        r = self.r
        best = 0.0
        bestu = r
        Rr = self.R[r]
        u_hi = r - 1
        u_floor = 0
        if self.window_cap > 0 and r - self.window_cap > 0:
            u_floor = r - self.window_cap
        while u_hi >= u_floor:
            b = u_hi >> 6
            lo = b << 6
            if lo < u_floor:
                lo = u_floor
            if Rr - self.minR[b] >= best - MARGIN:
                for u in range(u_hi, lo - 1, -1):
                    W = self.window_value(u)
                    if W >= best:
                        best = W
                        bestu = u
            if b == 0 or lo == u_floor:
                break
            if Rr - self.prefmin[b - 1] < best - MARGIN:
                break
            u_hi = lo - 1
        self.last_S = float(best)
        self.last_u = bestu
        self.last_n = r - bestu

    def step(self, x):
        if self.r >= self.capacity:
            raise RuntimeError("scan kernel capacity exhausted; call grow()")
        self._push(x)
        self._scan()
        return self.last_S, self.last_u, self.last_n

    def run(self, X, threshold, max_rows=-1):
        X = np.ascontiguousarray(X, dtype=np.int32)
        rows = X.shape[0]
        if 0 <= max_rows < rows:
            rows = max_rows
        for i in range(rows):
            if self.r >= self.capacity:
                return 2, i, self.last_S, self.last_u
            self._push(X[i])
            self._scan()
            if self.last_S >= threshold:
                return 1, i + 1, self.last_S, self.last_u
        return 0, rows, self.last_S, self.last_u
