"""Fixed-step method-of-steps integrator for systems with discrete delays.

Classical 4-stage Runge-Kutta between grid nodes with a cubic Hermite dense
output per step.  Delays are snapped to integer multiples of the step so
that every method-of-steps breakpoint (integer combinations of the delays,
plus history jump points propagated forward) lands on a grid node.  A
consequence worth exploiting: delayed reads from the RK4 stages only ever
hit stored nodes or exact cell midpoints, so the dense output is evaluated
at full order and never across a derivative discontinuity.

States are handled as plain tuples of floats in the inner loop (markedly
faster than small ndarrays in CPython) and stored in numpy arrays on the
resulting Trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DelayTooSmall, NonFiniteState, OutOfRange

Vector = tuple[float, ...]
FieldFn = Callable[[float, Vector, tuple[Vector, ...]], Vector]

#: Default integration step, in model time units.  CLI-overridable.
DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class DelaySpec:
    """Discrete delays of a vector field, sorted ascending (duplicates allowed)."""

    delays: tuple[float, ...]
    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        ds = tuple(float(d) for d in self.delays)
        if any(d < 0 for d in ds):
            raise ValueError("delays must be nonnegative")
        if list(ds) != sorted(ds):
            ds = tuple(sorted(ds))
        object.__setattr__(self, "delays", ds)

    @property
    def max_delay(self) -> float:
        return self.delays[-1] if self.delays else 0.0


@dataclass(frozen=True)
class History:
    """Initial data on [-span, 0].

    ``fn`` maps theta in [-span, 0] to a state tuple; it must return the
    right limit at theta = 0 (the state the integration starts from).
    ``jumps`` lists the theta values where ``fn`` may be discontinuous;
    elsewhere it is assumed piecewise smooth.  ``deriv``, when provided,
    returns d(fn)/d(theta) between jumps and enables fourth-order
    quadrature of conserved-quantity integrals over the history segment.
    """

    span: float
    fn: Callable[[float], Sequence[float]]
    jumps: tuple[float, ...] = ()
    deriv: Callable[[float], Sequence[float]] | None = None

    def __post_init__(self):
        if self.span <= 0:
            raise ValueError("history span must be positive")

    def value(self, theta: float) -> Vector:
        if theta < -self.span - 1e-12 or theta > 1e-12:
            raise OutOfRange(f"history evaluated at theta={theta!r}, span={self.span!r}")
        return tuple(self.fn(min(0.0, max(theta, -self.span))))


def constant_history(value: Sequence[float], span: float) -> History:
    """History identically equal to ``value`` on [-span, 0]."""
    v = tuple(float(x) for x in value)
    zero = tuple(0.0 for _ in v)
    return History(span=float(span), fn=lambda theta: v, jumps=(),
                   deriv=lambda theta: zero)


class Trajectory:
    """Dense solution of a delay system on [0, t_end].

    Piecewise cubic Hermite segments over a uniform grid, with the initial
    history prepended so delayed arguments and window functionals can be
    evaluated anywhere in [-span, t_end].  Immutable after construction and
    safe to read concurrently.
    """

    __slots__ = ("t0", "t_end", "step", "states", "derivs", "history",
                 "snapped_delays", "requested_delays", "jumps", "dimension")

    def __init__(self, step, states, derivs, history, snapped_delays,
                 requested_delays):
        self.t0 = 0.0
        self.step = float(step)
        self.states = states          # (n+1, dim), read-only
        self.derivs = derivs          # (n+1, dim)
        self.states.setflags(write=False)
        self.derivs.setflags(write=False)
        self.history = history
        self.snapped_delays = tuple(snapped_delays)
        self.requested_delays = tuple(requested_delays)
        self.t_end = (states.shape[0] - 1) * self.step
        self.dimension = states.shape[1]
        # Value discontinuities, in absolute time (all <= 0: the history's
        # own jumps; a jump at 0 covers outbreak-style initial data).
        self.jumps = tuple(sorted(set(history.jumps)))

    @property
    def n_nodes(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.step

    def node_index(self, t: float) -> int | None:
        """Index of the grid node at time ``t``, or None if off-grid."""
        u = t / self.step
        i = int(round(u))
        if 0 <= i < self.n_nodes and abs(u - i) <= 1e-9:
            return i
        return None

    def sample(self, t: float) -> np.ndarray:
        """State at time ``t``; exact at grid nodes."""
        return np.asarray(self.sample_tuple(t), dtype=float)

    def sample_tuple(self, t: float) -> Vector:
        if t < self.t0:
            return self.history.value(t)
        if t > self.t_end + 1e-9 * self.step:
            raise OutOfRange(f"t={t!r} beyond trajectory end {self.t_end!r}")
        i = self.node_index(t)
        if i is not None:
            return tuple(self.states[i])
        u = t / self.step
        i = min(int(u), self.n_nodes - 2)
        th = u - i
        h = self.step
        y0 = self.states[i]
        y1 = self.states[i + 1]
        f0 = self.derivs[i]
        f1 = self.derivs[i + 1]
        t2 = th * th
        t3 = t2 * th
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + th
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        out = h00 * y0 + h01 * y1 + (h10 * f0 + h11 * f1) * h
        return tuple(out)

    def deriv_sample(self, t: float) -> np.ndarray:
        """Time derivative of the dense interpolant at ``t`` (t >= 0)."""
        if t < self.t0 or t > self.t_end + 1e-9 * self.step:
            raise OutOfRange(f"derivative requested at t={t!r}")
        i = self.node_index(t)
        if i is not None:
            return np.asarray(self.derivs[i], dtype=float)
        u = t / self.step
        i = min(int(u), self.n_nodes - 2)
        th = u - i
        h = self.step
        y0 = self.states[i]
        y1 = self.states[i + 1]
        f0 = self.derivs[i]
        f1 = self.derivs[i + 1]
        d00 = (6 * th * th - 6 * th) / h
        d10 = 3 * th * th - 4 * th + 1
        d01 = -d00
        d11 = 3 * th * th - 2 * th
        return d00 * y0 + d01 * y1 + d10 * f0 + d11 * f1

    def component(self, idx: int) -> np.ndarray:
        """Stored node values of one state component."""
        return self.states[:, idx]


def sample(traj: Trajectory, t: float) -> np.ndarray:
    """Functional form of Trajectory.sample."""
    return traj.sample(t)


def _snap_delays(delays: DelaySpec, step: float) -> list[int]:
    """Integer lags (multiples of step) for each delay; validates sizes."""
    lags = []
    for d in delays.delays:
        if d == 0.0:
            lags.append(0)
            continue
        if d < step * (1 - 1e-9):
            raise DelayTooSmall(f"delay {d!r} is smaller than step {step!r}")
        lags.append(max(1, int(round(d / step))))
    return lags


def integrate(field: FieldFn, delays: DelaySpec, history: History,
              t_end: float, step: float = DEFAULT_STEP) -> Trajectory:
    """Integrate x'(t) = field(t, x(t), (x(t-d_1), ..., x(t-d_k))) on [0, t_end].

    ``field`` receives the current state and one delayed state per entry of
    ``delays`` (in order).  Zero delays read the current stage value, so
    degenerate parameter choices need no special casing by the caller.
    Each nonzero delay is rounded to the nearest multiple of ``step``
    (error <= step/2, recorded on the result as ``snapped_delays``).

    Raises DelayTooSmall for delays in (0, step) and NonFiniteState if any
    component stops being finite.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    h = float(step)
    lags = _snap_delays(delays, h)
    snapped = tuple(L * h for L in lags)
    if snapped and snapped[-1] > history.span + h:
        raise OutOfRange(
            f"max snapped delay {snapped[-1]!r} exceeds history span {history.span!r}")

    n = int(math.ceil(t_end / h - 1e-9))
    n = max(n, 1)
    dim = delays.dimension

    states = np.empty((n + 1, dim))
    derivs = np.empty((n + 1, dim))
    node_vals: list[Vector] = []   # python-level mirrors for cheap tuple reads
    node_ders: list[Vector] = []

    def hist_value(theta, _value=history.value, _lo=-history.span):
        # snapping may push a delay at most step/2 past the span: clamp
        return _value(theta if theta >= _lo else _lo)
    y = hist_value(0.0)
    if len(y) != dim:
        raise ValueError("history dimension does not match the delay spec")

    h2 = 0.5 * h
    h6 = h / 6.0
    h8 = 0.125 * h
    rng_dim = range(dim)
    n_lags = len(lags)

    def delayed_at_node(j: int, current: Vector) -> tuple[Vector, ...]:
        out = []
        for idx in range(n_lags):
            L = lags[idx]
            if L == 0:
                out.append(current)
                continue
            jj = j - L
            out.append(node_vals[jj] if jj >= 0 else hist_value(jj * h))
        return tuple(out)

    def delayed_at_mid(j: int) -> list[Vector | None]:
        # Value at t = (j + 1/2- L)*h per lag; None marks zero lags (the
        # caller substitutes the live stage value).
        out: list[Vector | None] = []
        for idx in range(n_lags):
            L = lags[idx]
            if L == 0:
                out.append(None)
                continue
            jj = j - L
            if jj >= 0:
                a = node_vals[jj]
                b = node_vals[jj + 1]
                fa = node_ders[jj]
                fb = node_ders[jj + 1]
                out.append(tuple(0.5 * (a[c] + b[c]) + h8 * (fa[c] - fb[c])
                                 for c in rng_dim))
            else:
                out.append(hist_value(jj * h + h2))
        return out

    z0 = delayed_at_node(0, y)
    f0 = tuple(field(0.0, y, z0))
    states[0] = y
    derivs[0] = f0
    node_vals.append(y)
    node_ders.append(f0)

    k1 = f0
    for j in range(n):
        t = j * h
        yj = node_vals[j]

        zmid = delayed_at_mid(j)
        y2 = tuple(yj[c] + h2 * k1[c] for c in rng_dim)
        z2 = tuple(y2 if zm is None else zm for zm in zmid)
        k2 = field(t + h2, y2, z2)

        y3 = tuple(yj[c] + h2 * k2[c] for c in rng_dim)
        z3 = tuple(y3 if zm is None else zm for zm in zmid)
        k3 = field(t + h2, y3, z3)

        y4 = tuple(yj[c] + h * k3[c] for c in rng_dim)
        z4 = delayed_at_node(j + 1, y4)
        k4 = field(t + h, y4, z4)

        ynew = tuple(yj[c] + h6 * (k1[c] + 2.0 * (k2[c] + k3[c]) + k4[c])
                     for c in rng_dim)
        if not math.isfinite(sum(ynew)):
            raise NonFiniteState(f"non-finite state at t={t + h!r}: {ynew!r}")

        znew = delayed_at_node(j + 1, ynew)
        fnew = tuple(field(t + h, ynew, znew))

        i = j + 1
        states[i] = ynew
        derivs[i] = fnew
        node_vals.append(ynew)
        node_ders.append(fnew)
        k1 = fnew

    return Trajectory(h, states, derivs, history, snapped, delays.delays)
