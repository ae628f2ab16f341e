"""SIQ/SEIQ vector fields, parameter handling, initial data, and the
conserved quantities that label the invariant foliation.

Component conventions: SIQ states are (S, I, Q), SEIQ states are
(S, E, I, Q).  All populations are fractions; validated initial data lives
in the probability simplex.  Time is measured in units of the mean
infectious period (recovery rate 1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from typing import Callable, NamedTuple

import numpy as np

from .dde_core import (DEFAULT_STEP, DelaySpec, History, Trajectory,
                       constant_history, integrate)
from .errors import (FileParse, InvalidFractions, NotInSimplex, SpanTooShort)

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Model parameters (r, p, tau, kappa, sigma); eps = p*exp(-tau) derived.

    r      rescaled reproductive number (> 0)
    p      identification probability, in [0, 1]
    tau    identification time, units of the infectious period (>= 0)
    kappa  isolation time (>= 0)
    sigma  latency period (>= 0; 0 selects the SIQ model)
    """

    r: float
    p: float
    tau: float
    kappa: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")
        for name in ("tau", "kappa", "sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def eps(self) -> float:
        """Effectiveness of the identification process, p*exp(-tau)."""
        return self.p * math.exp(-self.tau)

    @property
    def span(self) -> float:
        """History span required by the delayed terms, sigma + tau + kappa."""
        return self.sigma + self.tau + self.kappa


class VectorField(NamedTuple):
    """A delayed vector field bundled with its delay specification."""

    fn: Callable
    delays: DelaySpec


def siq_field(params: ModelParams) -> VectorField:
    """Right-hand side of the SIQ system, delays {tau, tau+kappa}.

    S' = -r S I + I + r*eps*S(t-tau-kappa) I(t-tau-kappa)
    I' =  r S I - I - r*eps*S(t-tau) I(t-tau)
    Q' =  r*eps*[S(t-tau) I(t-tau) - S(t-tau-kappa) I(t-tau-kappa)]
    """
    if params.sigma != 0.0:
        raise ValueError("siq_field requires sigma = 0; use seiq_field")
    r = params.r
    re = r * params.eps

    def fn(t, y, z):
        s, i, _ = y
        s1, i1, _ = z[0]
        s2, i2, _ = z[1]
        new = r * s * i
        iso = re * s1 * i1
        ret = re * s2 * i2
        return (-new + i + ret, new - i - iso, iso - ret)

    return VectorField(fn, DelaySpec((params.tau, params.tau + params.kappa), 3))


def siq_field_kappa_inf(params: ModelParams) -> VectorField:
    """SIQ variant with permanent isolation (kappa = infinity): the return
    flow into S is dropped, so Q only accumulates."""
    if params.sigma != 0.0:
        raise ValueError("siq_field_kappa_inf requires sigma = 0")
    r = params.r
    re = r * params.eps

    def fn(t, y, z):
        s, i, _ = y
        s1, i1, _ = z[0]
        new = r * s * i
        iso = re * s1 * i1
        return (-new + i, new - i - iso, iso)

    return VectorField(fn, DelaySpec((params.tau,), 3))


def seiq_field(params: ModelParams) -> VectorField:
    """Right-hand side of the SEIQ system, delays {sigma, sigma+tau,
    sigma+tau+kappa}; states ordered (S, E, I, Q)."""
    r = params.r
    re = r * params.eps

    def fn(t, y, z):
        s, _, i, _ = y
        ss, _, is_, _ = z[0]          # t - sigma
        st, _, it, _ = z[1]           # t - sigma - tau
        sk, _, ik, _ = z[2]           # t - sigma - tau - kappa
        new = r * s * i
        mat = r * ss * is_            # E -> I maturation flow
        iso = re * st * it
        ret = re * sk * ik
        return (-new + i + ret, new - mat, mat - i - iso, iso - ret)

    d = (params.sigma, params.sigma + params.tau,
         params.sigma + params.tau + params.kappa)
    return VectorField(fn, DelaySpec(d, 4))


def outbreak_history(params: ModelParams, i0: float, q0: float = 0.0,
                     e0: float = 0.0, *, seiq: bool | None = None) -> History:
    """History for a sudden outbreak at t = 0.

    psi(theta) = (1, 0, 0[, 0]) for theta < 0 and
    psi(0) = (1 - i0 - q0 - e0, [e0,] i0, q0), with the jump recorded at
    theta = 0.  The dimension is 4 when the SEIQ model is implied (sigma > 0
    or e0 > 0) and can be forced with ``seiq``.
    """
    for name, v in (("i0", i0), ("q0", q0), ("e0", e0)):
        if v < 0:
            raise InvalidFractions(f"{name} must be nonnegative, got {v!r}")
    if i0 <= 0:
        raise InvalidFractions("an outbreak needs i0 > 0")
    if i0 + q0 + e0 > 1.0 + SIMPLEX_TOL:
        raise InvalidFractions(f"i0 + q0 + e0 = {i0 + q0 + e0!r} exceeds 1")
    if seiq is None:
        seiq = params.sigma > 0 or e0 > 0
    if not seiq and e0 > 0:
        raise InvalidFractions("e0 > 0 requires the SEIQ model")
    span = max(params.span, DEFAULT_STEP)
    if seiq:
        pre = (1.0, 0.0, 0.0, 0.0)
        at0 = (1.0 - i0 - q0 - e0, e0, i0, q0)
        zero = (0.0, 0.0, 0.0, 0.0)
    else:
        pre = (1.0, 0.0, 0.0)
        at0 = (1.0 - i0 - q0 - e0, i0, q0)
        zero = (0.0, 0.0, 0.0)

    def fn(theta):
        return at0 if theta >= 0.0 else pre

    return History(span=span, fn=fn, jumps=(0.0,), deriv=lambda theta: zero)


def simulate(params: ModelParams, history: History, t_end: float,
             step: float = DEFAULT_STEP, *, kappa_inf: bool = False) -> Trajectory:
    """Integrate the model matching the history's dimension (3: SIQ, 4: SEIQ)."""
    dim = len(history.value(0.0))
    if kappa_inf:
        field = siq_field_kappa_inf(params)
    elif dim == 3:
        field = siq_field(params)
    elif dim == 4:
        field = seiq_field(params)
    else:
        raise ValueError(f"history dimension {dim} is not a SIQ/SEIQ state")
    return integrate(field.fn, field.delays, history, t_end, step)


# ---------------------------------------------------------------------------
# window quadrature for the conserved quantities
# ---------------------------------------------------------------------------

def _eval_history_nodes(hist: History, ts: np.ndarray):
    vals = np.array([hist.value(t) for t in ts], dtype=float)
    if hist.deriv is None:
        return vals, None
    ders = np.array([hist.deriv(min(0.0, max(t, -hist.span))) for t in ts],
                    dtype=float)
    return vals, ders


def _eval_nodes(phi: History | Trajectory, ts: np.ndarray):
    """State values and (when available) time derivatives at absolute times."""
    if isinstance(phi, History):
        return _eval_history_nodes(phi, ts)
    vals = np.empty((ts.size, phi.dimension))
    ders = np.empty_like(vals)
    have = True
    neg = ts < 0.0
    if neg.any():
        hv, hd = _eval_history_nodes(phi.history, ts[neg])
        vals[neg] = hv
        if hd is None:
            have = False
        else:
            ders[neg] = hd
    pos = ~neg
    if pos.any():
        tp = ts[pos]
        u = tp / phi.step
        i = np.clip(u.astype(int), 0, phi.n_nodes - 2)
        th = u - i
        y0 = phi.states[i]
        y1 = phi.states[i + 1]
        f0 = phi.derivs[i]
        f1 = phi.derivs[i + 1]
        t2 = th * th
        t3 = t2 * th
        h00 = (2 * t3 - 3 * t2 + 1)[:, None]
        h10 = (t3 - 2 * t2 + th)[:, None]
        h01 = (-2 * t3 + 3 * t2)[:, None]
        h11 = (t3 - t2)[:, None]
        h = phi.step
        vals[pos] = h00 * y0 + h01 * y1 + (h10 * f0 + h11 * f1) * h
        d00 = ((6 * t2 - 6 * th) / h)[:, None]
        d10 = (3 * t2 - 4 * th + 1)[:, None]
        d11 = (3 * t2 - 2 * th)[:, None]
        ders[pos] = d00 * (y0 - y1) + d10 * f0 + d11 * f1
    return vals, (ders if have else None)


def _split_points(phi: History | Trajectory, lo: float,
                  hi: float) -> tuple[list[float], set[float]]:
    if isinstance(phi, History):
        jumps = set(phi.jumps)
    else:
        # the history/solution junction at t = 0 is a derivative kink even
        # for continuous data, so always split there
        jumps = set(phi.jumps) | {0.0}
    pts = sorted(j for j in jumps if lo < j < hi)
    # endpoints coinciding with a jump are evaluated just inside the
    # window: left limits at the right edge, right limits at the left edge
    edge = {j for j in jumps if j == lo or j == hi}
    return [lo] + pts + [hi], set(pts) | edge


def _window_integral(phi, lo: float, hi: float, h: float, u_fn,
                     du_fn) -> float:
    """Integral of u(state(t)) dt over [lo, hi], fourth order on the grid.

    Composite trapezoid with the Euler-Maclaurin endpoint correction
    (h^2/12)*(u'(lo) - u'(hi)) applied per smooth segment; segments are cut
    at recorded jump points, where one-sided values are taken just inside
    each side.  Falls back to the plain trapezoid where derivatives are
    unavailable.
    """
    if hi <= lo:
        return 0.0
    bounds, jumpset = _split_points(phi, lo, hi)
    total = 0.0
    for s0, s1 in zip(bounds[:-1], bounds[1:]):
        width = s1 - s0
        m = int(round(width / h))
        if m < 1 or abs(m * h - width) > 1e-9 * max(1.0, width):
            m = max(1, math.ceil(width / h - 1e-9))
        hseg = width / m
        ts = s0 + hseg * np.arange(m + 1)
        ts[-1] = s1
        shift = 1e-7 * hseg
        if s0 in jumpset:
            ts[0] = s0 + shift
        if s1 in jumpset:
            ts[-1] = s1 - shift
        vals, ders = _eval_nodes(phi, ts)
        u = u_fn(ts, vals)
        seg = hseg * (u.sum() - 0.5 * (u[0] + u[-1]))
        if ders is not None:
            du = du_fn(ts, vals, ders)
            seg += hseg * hseg / 12.0 * (du[0] - du[-1])
        total += seg
    return total


def _point(phi: History | Trajectory, t: float) -> tuple[float, ...]:
    if isinstance(phi, History):
        return phi.value(t)
    return phi.sample_tuple(t)


def _anchor_and_span(phi, t):
    if isinstance(phi, History):
        if t is not None:
            raise ValueError("evaluation time applies to trajectories only")
        return 0.0, phi.span
    t = phi.t_end if t is None else float(t)
    return t, t + phi.history.span


def conserved_H(params: ModelParams, phi: History | Trajectory,
                t: float | None = None, step: float | None = None) -> float:
    """Conserved functional H of the SIQ flow, evaluated on a window.

    H(phi) = 1 - phi_S(0) - phi_I(-kappa)
             + integral_{-kappa}^{0} (1 - r*phi_S(s)) * phi_I(s) ds.

    ``phi`` is either a History (evaluated at its right end) or a
    Trajectory (evaluated at time ``t``, default t_end).  The quadrature
    runs on the integrator grid; exact conservation along trajectories
    presumes kappa commensurate with the step (integrate() snaps delays
    and records them).
    """
    k = params.kappa
    r = params.r
    anchor, avail = _anchor_and_span(phi, t)
    if avail + 1e-12 < k:
        raise SpanTooShort(f"window must span [-kappa, 0]; kappa={k!r}, "
                           f"available {avail!r}")
    h = step or (phi.step if isinstance(phi, Trajectory) else DEFAULT_STEP)
    s_now = _point(phi, anchor)
    s_back = _point(phi, anchor - k)

    def u_fn(ts, v):
        return (1.0 - r * v[:, 0]) * v[:, 1]

    def du_fn(ts, v, d):
        return -r * d[:, 0] * v[:, 1] + (1.0 - r * v[:, 0]) * d[:, 1]

    integral = _window_integral(phi, anchor - k, anchor, h, u_fn, du_fn)
    return 1.0 - s_now[0] - s_back[1] + integral


def conserved_H_star(params: ModelParams, phi: History | Trajectory,
                     t: float | None = None,
                     step: float | None = None) -> tuple[float, float]:
    """Conserved pair (H1*, H2*) of the SEIQ flow on a 4-state window.

    H1* = 1 - phi_S(0) - phi_E(0) - phi_I(-kappa)
          + int_{-kappa}^{0} phi_I ds
          - r * int_{-sigma-kappa}^{-sigma} phi_S phi_I ds
    H2* = phi_E(0) - r * int_{-sigma}^{0} phi_S phi_I ds

    Reduces to (H, .) at sigma = 0 with phi_E(0) = 0.
    """
    k, sg, r = params.kappa, params.sigma, params.r
    anchor, avail = _anchor_and_span(phi, t)
    if avail + 1e-12 < sg + k:
        raise SpanTooShort(f"window must span [-(sigma+kappa), 0]; need "
                           f"{sg + k!r}, available {avail!r}")
    h = step or (phi.step if isinstance(phi, Trajectory) else DEFAULT_STEP)
    s_now = _point(phi, anchor)
    s_back = _point(phi, anchor - k)

    def i_fn(ts, v):
        return v[:, 2].copy()

    def di_fn(ts, v, d):
        return d[:, 2].copy()

    def si_fn(ts, v):
        return v[:, 0] * v[:, 2]

    def dsi_fn(ts, v, d):
        return d[:, 0] * v[:, 2] + v[:, 0] * d[:, 2]

    int_i = _window_integral(phi, anchor - k, anchor, h, i_fn, di_fn)
    int_si_back = _window_integral(phi, anchor - sg - k, anchor - sg, h,
                                   si_fn, dsi_fn)
    int_si_now = _window_integral(phi, anchor - sg, anchor, h, si_fn, dsi_fn)
    h1 = 1.0 - s_now[0] - s_now[1] - s_back[2] + int_i - r * int_si_back
    h2 = s_now[1] - r * int_si_now
    return h1, h2


# ---------------------------------------------------------------------------
# Lemma-style admissibility check for initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the positivity conditions on initial data.

    Each bound is the right-hand side of one integral condition; the
    matching value must not fall below it.  ``violations`` lists the failed
    conditions with their margins.
    """

    i_value: float
    i_bound: float
    q_value: float
    q_bound: float
    violations: tuple[str, ...]

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_history(params: ModelParams, psi: History,
                     step: float | None = None) -> ValidationReport:
    """Check that initial data leads to nonnegative solutions.

    Conditions (composite quadrature on the integrator grid):
      psi_I(0) >= r*p * int_{-tau}^{0} e^theta psi_S psi_I dtheta
      psi_Q(0) >= r*eps * int_{-tau-kappa}^{0} psi_S psi_I dtheta

    Raises NotInSimplex if any sampled value leaves the simplex
    (tolerance 1e-12).  SEIQ histories are checked with the same bounds on
    their (S, I, Q) components.
    """
    h = step or DEFAULT_STEP
    dim = len(psi.value(0.0))
    i_idx, q_idx = (2, 3) if dim == 4 else (1, 2)
    if psi.span + 1e-12 < params.tau + params.kappa:
        raise SpanTooShort(
            f"history span {psi.span!r} shorter than tau+kappa "
            f"{params.tau + params.kappa!r}")

    n = max(2, int(math.ceil(psi.span / h)) + 1)
    grid = np.linspace(-psi.span, 0.0, n)
    vals, _ = _eval_history_nodes(psi, grid)
    if vals.min() < -SIMPLEX_TOL or np.abs(vals.sum(axis=1) - 1.0).max() > 1e-9:
        bad = grid[int(np.argmin(vals.min(axis=1)))]
        raise NotInSimplex(f"history leaves the simplex near theta={bad!r}")

    def si_fn(ts, v):
        return v[:, 0] * v[:, i_idx]

    def dsi_fn(ts, v, d):
        return d[:, 0] * v[:, i_idx] + v[:, 0] * d[:, i_idx]

    def esi_fn(ts, v):
        return np.exp(ts) * v[:, 0] * v[:, i_idx]

    def desi_fn(ts, v, d):
        si = v[:, 0] * v[:, i_idx]
        dsi = d[:, 0] * v[:, i_idx] + v[:, 0] * d[:, i_idx]
        return np.exp(ts) * (si + dsi)

    at0 = psi.value(0.0)
    i_bound = params.r * params.p * _window_integral(
        psi, -params.tau, 0.0, h, esi_fn, desi_fn)
    q_bound = params.r * params.eps * _window_integral(
        psi, -(params.tau + params.kappa), 0.0, h, si_fn, dsi_fn)

    violations = []
    if at0[i_idx] < i_bound - 1e-12:
        violations.append(
            f"psi_I(0) = {at0[i_idx]:.9g} < bound {i_bound:.9g} "
            f"(margin {at0[i_idx] - i_bound:.3g})")
    if at0[q_idx] < q_bound - 1e-12:
        violations.append(
            f"psi_Q(0) = {at0[q_idx]:.9g} < bound {q_bound:.9g} "
            f"(margin {at0[q_idx] - q_bound:.3g})")
    return ValidationReport(i_value=at0[i_idx], i_bound=i_bound,
                            q_value=at0[q_idx], q_bound=q_bound,
                            violations=tuple(violations))


# ---------------------------------------------------------------------------
# disease table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiseaseSpec:
    """One row of the disease table: name, r, infectious period in days."""

    name: str
    r: float
    infectious_period_days: float
    source: str = ""

    def __post_init__(self):
        if not (self.r > 0 and self.infectious_period_days > 0):
            raise ValueError("r and infectious_period_days must be positive")


def load_disease_table(path: str | None = None) -> list[DiseaseSpec]:
    """Parse a disease CSV (header: name,r,infectious_period_days,source).

    With no path, loads the table bundled with the package.
    """
    if path is None:
        ref = resources.files("siq").joinpath("data/diseases.csv")
        text = ref.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and
             not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    expected = ["name", "r", "infectious_period_days", "source"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
        raise FileParse(f"disease table header must be {','.join(expected)}, "
                        f"got {reader.fieldnames!r}")
    out = []
    for row in reader:
        try:
            out.append(DiseaseSpec(name=row["name"].strip(),
                                   r=float(row["r"]),
                                   infectious_period_days=float(
                                       row["infectious_period_days"]),
                                   source=(row["source"] or "").strip()))
        except (TypeError, ValueError) as exc:
            raise FileParse(f"bad disease row {row!r}: {exc}") from exc
    if not out:
        raise FileParse("disease table has no data rows")
    return out


__all__ = [
    "ModelParams", "VectorField", "siq_field", "seiq_field",
    "siq_field_kappa_inf", "outbreak_history", "simulate",
    "conserved_H", "conserved_H_star", "validate_history",
    "ValidationReport", "DiseaseSpec", "load_disease_table",
    "constant_history",
]
