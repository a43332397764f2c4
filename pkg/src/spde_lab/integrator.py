"""Time stepping for the truncated equation and its linearized flow.

The linear part is integrated exactly: each step multiplies by ``e^{dt A}``
and adds an exact draw of the stochastic convolution over the step.  Two
treatments of ``F`` are available:

``drift_implicit``
    ``x+ = e^{dt A} y + noise`` with ``y - dt F(y) = x`` (a Yosida resolvent
    evaluation with ``delta = dt``).
``exponential_tamed``
    ``x+ = e^{dt A} (x + dt F(x) / (1 + dt |F(x)|)) + noise``.

Batches of paths are advanced by :func:`propagate`, which splits paths into
fixed chunks and runs them on a thread pool.  Paths never share state, so
results do not depend on the number of threads.
"""
from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .drift import DriftSpec, NoConvergence
from .model import SPDEModel
from .rng import RngStream
from .spectrum import ModeSpectrum, variance_factor

SCHEMES = {"exponential_tamed": K.EXP_TAMED, "drift_implicit": K.DRIFT_IMPLICIT}
CHUNK = 1024

_threads: Optional[int] = None


def set_threads(n: Optional[int]) -> None:
    """Worker count for path batches; ``None`` restores the default."""
    global _threads
    if n is not None and int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _threads = None if n is None else int(n)


def get_threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get("SPDE_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class PathConfig:
    """Discretization and noise identity of a path."""

    dt: float
    t_final: float
    scheme: str = "drift_implicit"
    seed: int = 0
    path_index: int = 0
    stream: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.t_final < self.dt:
            raise ValueError("dt must not exceed t_final")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def stiffness(self, spec: ModeSpectrum) -> float:
        """``dt * max a_k`` (diagnostic only)."""
        return float(self.dt * spec.a.max())


@dataclass
class TrajectorySample:
    times: np.ndarray
    states: np.ndarray
    scheme: str
    dt: float
    seed: int
    stream: int
    path_index: int
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        header = "t," + ",".join(f"x_{k + 1}" for k in range(n))
        data = np.column_stack([self.times, self.states])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    def to_binary(self, path) -> None:
        """Binary dump: ``SPD1`` magic, u32 n_modes, u32 n_steps, u32 reserved,
        then little-endian float64 rows ``(t, x_1, ..., x_n)``."""
        n_rows, n = self.states.shape
        data = np.column_stack([self.times, self.states]).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(b"SPD1" + struct.pack("<III", n, n_rows - 1, 0))
            fh.write(data.tobytes(order="C"))


def read_binary(path):
    """Inverse of :meth:`TrajectorySample.to_binary`; returns ``(times, states)``."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != b"SPD1":
            raise ValueError("not an SPD1 trajectory file")
        n, n_steps, _ = struct.unpack("<III", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(n_steps + 1, n + 1)
    return data[:, 0].copy(), data[:, 1:].copy()


@dataclass
class LinearizedFlow:
    h: np.ndarray
    times: np.ndarray
    states: np.ndarray


def step_coefficients(spec: ModeSpectrum, dt: float):
    """``(e^{-a dt}, noise standard deviation)`` for one step."""
    return (np.ascontiguousarray(np.exp(-spec.a * dt)),
            np.ascontiguousarray(np.sqrt(spec.q2a * variance_factor(spec.a, dt))))


def noise_increment(spec: ModeSpectrum, dt: float, rng: RngStream, step_index: int = 0) -> np.ndarray:
    """One exact draw of the stochastic convolution over a step of length ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    _, sd = step_coefficients(spec, dt)
    return sd * rng.normals(step_index, spec.n_modes)


def _check_implicit(model: SPDEModel, dt: float, scheme: str):
    if scheme == "drift_implicit" and not model.zero_drift:
        s = float(np.max(model.sup_fprime))
        if dt * s >= 1.0:
            raise ValueError(f"implicit step needs dt * sup F' < 1, got {dt * s:g}")


def _as_model(d, spec) -> SPDEModel:
    if isinstance(d, SPDEModel):
        return d
    return SPDEModel(spec, d, certify=False)


def step(state, d: DriftSpec, spec: ModeSpectrum, dt: float, rng: RngStream,
         scheme: str = "drift_implicit", step_index: int = 0) -> np.ndarray:
    """One step of ``scheme`` from ``state`` using noise counter ``step_index``."""
    model = _as_model(d, spec)
    _check_implicit(model, dt, scheme)
    X = np.array(state, dtype=float, ndmin=2)
    if X.shape[1] != spec.n_modes:
        raise ValueError("state dimension mismatch")
    decay, sd = step_coefficients(spec, dt)
    st = K.advance(X, np.empty((0, 0)), False, int(step_index), 1, float(dt), decay, sd,
                   model.p1, model.p3, model.ps, SCHEMES[scheme], False,
                   np.uint64(rng.seed), np.uint64(rng.stream),
                   np.array([rng.path_index], dtype=np.int64))
    if st != K.OK:
        raise NoConvergence("implicit step did not converge")
    return X[0]


def _segments(times, dt, zero_drift):
    """Per node: (n_steps, step size); ``times[0]`` is the start time."""
    out = []
    for t0, t1 in zip(times[:-1], times[1:]):
        span = t1 - t0
        if span <= 0:
            out.append((0, 0.0))
            continue
        if zero_drift:
            out.append((1, span))
        else:
            n = max(1, int(math.ceil(span / dt - 1e-9)))
            out.append((n, span / n))
    return out


def propagate(model: SPDEModel, x0, times: Sequence[float], dt: float, *,
              scheme: str = "drift_implicit", seed: int = 0, stream: int = 0,
              path_ids=None, tangent: bool = False,
              observe: Callable = None, threads: Optional[int] = None):
    """Advance a batch of paths through the node times ``times``.

    Parameters
    ----------
    model : SPDEModel
    x0 : array, shape (n_paths, n) or (n,)
        Initial states (a single state is broadcast to every path).
    times : increasing sequence
        Node times, starting at 0; each gap is split into equal steps of size
        at most ``dt`` (a single exact step when ``F = 0``).
    path_ids : int array, optional
        Noise identity of each path; defaults to ``arange(n_paths)``.
    tangent : bool
        Also propagate the per-mode multipliers of the linearized flow.
    observe : callable
        ``observe(node, rows, X, T)`` is called at every node with the global
        row slice and the chunk's states (and multipliers, or None).  It must
        only write results indexed by ``rows``.

    Returns
    -------
    X, T
        Final states and multipliers (None when ``tangent`` is False).
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] != 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing and start at 0")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    _check_implicit(model, dt, scheme)
    x0 = np.asarray(x0, dtype=float)
    if path_ids is None:
        n_paths = x0.shape[0] if x0.ndim == 2 else 1
        path_ids = np.arange(n_paths, dtype=np.int64)
    path_ids = np.ascontiguousarray(path_ids, dtype=np.int64)
    n_paths = path_ids.size
    X = np.array(np.broadcast_to(x0, (n_paths, model.n_modes)), dtype=float, order="C")
    T = np.ones_like(X) if tangent else None
    segs = _segments(times, dt, model.zero_drift)
    coef = {}
    for n_steps, h in segs:
        if n_steps and h not in coef:
            coef[h] = step_coefficients(model.spec, h)
    code = SCHEMES[scheme]
    empty = np.empty((0, 0))
    seed_u = np.uint64(seed)
    stream_u = np.uint64(stream)

    def run(lo, hi):
        Xc = X[lo:hi]
        Tc = T[lo:hi] if tangent else empty
        ids = path_ids[lo:hi]
        rows = slice(lo, hi)
        if observe is not None:
            observe(0, rows, Xc, Tc if tangent else None)
        step0 = 0
        for node, (n_steps, h) in enumerate(segs, start=1):
            if n_steps:
                decay, sd = coef[h]
                st = K.advance(Xc, Tc, tangent, step0, n_steps, h, decay, sd,
                               model.p1, model.p3, model.ps, code, model.zero_drift,
                               seed_u, stream_u, ids)
                if st != K.OK:
                    raise NoConvergence("implicit step did not converge")
                step0 += n_steps
            if observe is not None:
                observe(node, rows, Xc, Tc if tangent else None)

    bounds = [(lo, min(lo + CHUNK, n_paths)) for lo in range(0, n_paths, CHUNK)]
    workers = min(threads or get_threads(), len(bounds))
    if workers <= 1:
        for lo, hi in bounds:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for f in [pool.submit(run, lo, hi) for lo, hi in bounds]:
                f.result()
    return X, T


def simulate_path(x0, cfg: PathConfig, d, spec: ModeSpectrum) -> TrajectorySample:
    """One trajectory on the grid ``0, dt, 2 dt, ...`` (last step may be shorter)."""
    model = _as_model(d, spec)
    n_full = int(math.floor(cfg.t_final / cfg.dt + 1e-9))
    times = cfg.dt * np.arange(n_full + 1)
    if cfg.t_final - times[-1] > 1e-12 * cfg.t_final:
        times = np.append(times, cfg.t_final)
    states = np.empty((times.size, spec.n_modes))
    step0 = 0
    X = np.array(x0, dtype=float, ndmin=2)
    states[0] = X[0]
    ids = np.array([cfg.path_index], dtype=np.int64)
    _check_implicit(model, cfg.dt, cfg.scheme)
    for i in range(1, times.size):
        h = times[i] - times[i - 1]
        decay, sd = step_coefficients(spec, h)
        st = K.advance(X, np.empty((0, 0)), False, step0, 1, h, decay, sd,
                       model.p1, model.p3, model.ps, SCHEMES[cfg.scheme], model.zero_drift,
                       np.uint64(cfg.seed), np.uint64(cfg.stream), ids)
        if st != K.OK:
            raise NoConvergence("implicit step did not converge")
        step0 += 1
        states[i] = X[0]
    return TrajectorySample(times, states, cfg.scheme, cfg.dt, cfg.seed, cfg.stream,
                            cfg.path_index, {"stiffness": cfg.stiffness(spec)})


def linearized_flow(traj: TrajectorySample, h, d, spec: ModeSpectrum) -> LinearizedFlow:
    """Linearized flow ``S(t) = D X(t, x) h`` along a stored trajectory.

    ``exponential_tamed`` uses ``S+ = e^{dt A}(S + dt DF(X) S)``.
    ``drift_implicit`` uses the derivative of the implicit map itself,
    ``S+ = e^{dt A} (1 - dt DF(y))^{-1} S`` with ``y`` the resolvent point,
    which keeps the flow contractive for stiff drifts at any ``dt``.
    """
    model = _as_model(d, spec)
    h = np.asarray(h, dtype=float)
    S = np.empty_like(traj.states)
    S[0] = h
    for i in range(1, traj.times.size):
        dt = traj.times[i] - traj.times[i - 1]
        decay = np.exp(-spec.a * dt)
        x = traj.states[i - 1]
        if model.zero_drift:
            S[i] = decay * S[i - 1]
        elif traj.scheme == "drift_implicit":
            y = np.empty((1, x.size))
            st = K.resolve_array(np.ascontiguousarray(x[None, :]), dt, 0.0,
                                 model.p1, model.p3, model.ps, y)
            if st != K.OK:
                raise NoConvergence("implicit step did not converge")
            S[i] = decay * S[i - 1] / (1.0 - dt * model.drift_derivative(y[0]))
        else:
            S[i] = decay * (S[i - 1] + dt * model.drift_derivative(x) * S[i - 1])
    return LinearizedFlow(h, traj.times.copy(), S)
