"""Scan engine selection and kernel parameter construction.

The compiled extension is preferred when it imported cleanly; the pure
twin is the fallback and the reference for parity tests. Models that use
custom statistics always go through the generic kernel because they have
no prefix-channel form.
"""

from __future__ import annotations

import os

import numpy as np

from ._scan_py import GenericScanKernel, PyScanKernel

try:
    from ._scan import ScanKernel as _CompiledKernel
except ImportError:
    _CompiledKernel = None

_FORCED = os.environ.get("NIPT_ENGINE", "").strip().lower()


def compiled_available():
    return _CompiledKernel is not None


def active_engine():
    """Name of the engine new kernels will use: 'compiled' or 'pure'."""
    if _FORCED == "pure":
        return "pure"
    if _FORCED == "compiled":
        if _CompiledKernel is None:
            raise RuntimeError("NIPT_ENGINE=compiled but the extension is unavailable")
        return "compiled"
    return "compiled" if _CompiledKernel is not None else "pure"


def kernel_params(model, kappa):
    """Channel tables for the prefix-sum kernels.

    Returns None when any sensor uses a custom statistic; those models
    need the generic kernel.
    """
    kinds = []
    chan0 = []
    cst = []
    channels = []
    for sensor in model.sensors:
        stat = sensor.statistic
        if stat.kind == "mean":
            kinds.append(0)
            chan0.append(len(channels))
            channels.append(np.asarray(stat.params["scores"], dtype=np.float64))
            cst.append(float(stat.params["center"]))
        elif stat.kind == "variance":
            kinds.append(1)
            chan0.append(len(channels))
            values = np.asarray(stat.params["values"], dtype=np.float64)
            channels.append(values)
            channels.append(values * values)
            cst.append(float(stat.params["offset"]))
        else:
            return None
    m_max = max(model.sizes)
    vt = np.zeros((len(channels), m_max), dtype=np.float64)
    for c, col in enumerate(channels):
        vt[c, : len(col)] = col
    ts = np.zeros((len(model.sensors), m_max), dtype=np.float64)
    for j, sensor in enumerate(model.sensors):
        ts[j, : model.sizes[j]] = sensor.statistic.tangent_scores(sensor.f0)
    return {
        "kinds": np.asarray(kinds, dtype=np.int32),
        "chan0": np.asarray(chan0, dtype=np.int32),
        "vt": vt,
        "ts": ts,
        "cst": np.asarray(cst, dtype=np.float64),
        "kappa": float(kappa),
    }


def make_kernel(model, kappa, capacity=4096, window_cap=0, engine=None):
    """Build a scan kernel for ``model``.

    engine: None picks the import-time default; 'compiled', 'pure', and
    'generic' force a specific implementation.
    """
    if engine is None:
        engine = active_engine()
    if engine == "generic":
        return GenericScanKernel(model, kappa, capacity, window_cap)
    params = kernel_params(model, kappa)
    if params is None:
        return GenericScanKernel(model, kappa, capacity, window_cap)
    if engine == "compiled":
        if _CompiledKernel is None:
            raise RuntimeError("compiled scan engine is unavailable")
        cls = _CompiledKernel
    elif engine == "pure":
        cls = PyScanKernel
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return cls(
        params["kinds"],
        params["chan0"],
        params["vt"],
        params["ts"],
        params["cst"],
        params["kappa"],
        capacity,
        window_cap,
    )
