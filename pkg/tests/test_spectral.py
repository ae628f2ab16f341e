"""Spectral tests: characteristic function identities, winding counts
against closed-form/bisection oracles, Hopf detection, and the tau = 0
large-delay formulas."""

import cmath
import math

import numpy as np
import pytest

from siq.equilibria import q_critical
from siq.errors import EpsNotBelowOne
from siq.siq_model import ModelParams
from siq.spectral import (Box, asymptotic_spectrum_tau0, count_unstable,
                          default_box, disease_free_chareq, e0_hopf_bound,
                          endemic_chareq, hopf_kappa0, hopf_sequence,
                          HopfData, seiq_disease_free_chareq, stability_map,
                          strong_spectrum_tau0)

PS = ModelParams(r=2.5, p=0.5, tau=0.5, kappa=1.0)
QC = q_critical(2.5, 0.5, 0.5)


# ---------------------------------------------------------------------------
# characteristic function identities
# ---------------------------------------------------------------------------

def test_chi_vanishes_at_zero():
    for chi in (disease_free_chareq(PS, 0.3), endemic_chareq(PS, 0.1),
                seiq_disease_free_chareq(
                    ModelParams(r=2.5, p=0.5, tau=0.5, kappa=1.0, sigma=0.7),
                    0.1, 0.1)):
        assert complex(chi(0.0)) == 0.0


def test_disease_free_specialization():
    # chi at (1-q, 0, q) collapses to lam*(lam + 1 - r(1-q)(1 - eps e^{-tau lam}))
    rng = np.random.default_rng(1)
    chi = disease_free_chareq(PS, 0.3)
    eps = PS.eps
    for _ in range(20):
        lam = complex(rng.normal(), rng.normal())
        direct = lam * (lam + 1 - 2.5 * 0.7 * (1 - eps * cmath.exp(-0.5 * lam)))
        assert abs(complex(chi(lam)) - direct) <= 1e-12 * max(1.0, abs(direct))


def test_disease_free_factor_at_special_q():
    # at q = 1 - 1/r the nonzero factor becomes lam + eps*e^{-tau lam}
    q = 1.0 - 1.0 / 2.5
    chi = disease_free_chareq(PS, q)
    eps = PS.eps
    rng = np.random.default_rng(2)
    for _ in range(20):
        lam = complex(rng.normal(), rng.normal())
        if abs(lam) < 1e-3:
            continue
        factor = complex(chi(lam)) / lam
        assert abs(factor - (lam + eps * cmath.exp(-0.5 * lam))) <= 1e-12 * (
            1.0 + abs(lam))


def test_endemic_kappa0_collapse_dual_evaluation():
    # kappa = 0: chi equals lam*(lam + 1 - r(1 - q - 2(q_c - q))(1 - eps e^{-tau lam}))
    ps = ModelParams(r=2.5, p=0.5, tau=0.5, kappa=0.0)
    qc = q_critical(2.5, 0.5, 0.5)
    q = 0.08
    chi = endemic_chareq(ps, q)
    eps = ps.eps
    rng = np.random.default_rng(3)
    for _ in range(20):
        lam = complex(rng.normal(), rng.normal())
        direct = lam * (lam + 1 - 2.5 * (1 - q - 2 * (qc - q))
                        * (1 - eps * cmath.exp(-0.5 * lam)))
        assert abs(complex(chi(lam)) - direct) <= 1e-12 * max(1.0, abs(direct))


def test_seiq_disease_free_double_zero_root():
    ps = ModelParams(r=2.5, p=0.5, tau=0.5, kappa=1.0, sigma=0.7)
    chi = seiq_disease_free_chareq(ps, 0.05, 0.05)
    assert chi.trivial_order == 2
    # chi(h)/h^2 tends to a nonzero constant away from eta+q = q_c
    vals = [complex(chi(h)) / h ** 2 for h in (1e-5, 1e-6)]
    assert abs(vals[0] - vals[1]) <= 1e-4 * abs(vals[1])
    assert abs(vals[1]) > 1e-3


# ---------------------------------------------------------------------------
# counting and locating
# ---------------------------------------------------------------------------

def bisect_real_root(r, p, tau, q, hi=50.0):
    """Independent oracle: positive real root of the disease-free factor."""
    eps = p * math.exp(-tau)

    def g(x):
        return x + 1.0 - r * (1.0 - q) * (1.0 - eps * math.exp(-tau * x))

    lo = 1e-12
    assert g(lo) < 0 < g(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_disease_free_counts_and_root():
    above = count_unstable(disease_free_chareq(PS, QC + 0.05), locate=False)
    assert above.unstable_count == 0
    assert above.classification == "stable"

    below = count_unstable(disease_free_chareq(PS, QC - 0.05))
    assert below.unstable_count == 1
    assert len(below.roots) == 1
    root = below.roots[0]
    assert abs(root.imag) <= 1e-10
    assert below.residuals[0] <= 1e-10
    oracle = bisect_real_root(2.5, 0.5, 0.5, QC - 0.05)
    assert abs(root.real - oracle) <= 1e-8


def test_disease_free_flip_within_tolerance_of_qc():
    # the count changes within 1e-6 of q_c
    lo, hi = QC - 1e-3, QC + 1e-3
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        c = count_unstable(disease_free_chareq(PS, mid), locate=False).unstable_count
        if c == 1:
            lo = mid
        else:
            hi = mid
    assert hi - lo <= 1e-6 * 4
    assert abs(0.5 * (lo + hi) - QC) <= 1e-6


def test_no_complex_unstable_roots_on_disease_free_family():
    # no imaginary-axis crossings with |omega| > 1e-6: the stable side has
    # an empty right half plane and the unstable side's unique root is real
    rng = np.random.default_rng(4)
    done = 0
    while done < 6:
        r = rng.uniform(1.3, 5.0)
        p = rng.uniform(0.1, 0.95)
        tau = rng.uniform(0.0, 1.5)
        qc = q_critical(r, p, tau)
        if not 0.07 <= qc <= 0.93:
            continue
        done += 1
        ps = ModelParams(r=r, p=p, tau=tau, kappa=1.0)
        stable = count_unstable(disease_free_chareq(ps, qc + 0.05),
                                locate=False)
        assert stable.unstable_count == 0
        unstable = count_unstable(disease_free_chareq(ps, qc - 0.05))
        assert unstable.unstable_count == 1
        assert len(unstable.roots) == 1
        assert abs(unstable.roots[0].imag) <= 1e-6


def test_char_eval_and_custom_box():
    chi = disease_free_chareq(PS, QC - 0.05)
    from siq.spectral import char_eval
    lam = 0.3 + 0.2j
    assert char_eval(chi, lam) == complex(chi(lam))
    # a hand-sized rectangle around the known real root still counts it
    oracle = bisect_real_root(2.5, 0.5, 0.5, QC - 0.05)
    box = Box(0.01, max(1.0, 2 * oracle), -5.0, 5.0)
    assert box.re_min < oracle < box.re_max
    rep = count_unstable(chi, box=box, locate=False)
    assert rep.unstable_count == 1
    assert default_box(chi).re_min == pytest.approx(1e-8, abs=0)


def test_endemic_stable_at_kappa0_tau0():
    ps = ModelParams(r=2.5, p=0.5, tau=0.0, kappa=0.0)
    rep = count_unstable(endemic_chareq(ps, 0.0), locate=False)
    assert rep.unstable_count == 0


# ---------------------------------------------------------------------------
# closed forms at tau = 0
# ---------------------------------------------------------------------------

def test_strong_spectrum_values():
    lp, lm = strong_spectrum_tau0(2.5, 0.5, 0.0)
    assert lp == pytest.approx(-0.125 + 0.2904737509655563j, abs=1e-9)
    assert lm == pytest.approx(-0.125 - 0.2904737509655563j, abs=1e-9)


def test_strong_spectrum_vanishes_at_qc():
    qc = q_critical(2.5, 0.5, 0.0)
    lp, lm = strong_spectrum_tau0(2.5, 0.5, qc - 1e-12)
    assert abs(lp) <= 1e-6 and abs(lm) <= 1e-6


def test_strong_spectrum_always_damped():
    qc = q_critical(2.5, 0.5, 0.0)
    for q in np.linspace(0.0, qc - 1e-9, 100):
        lp, lm = strong_spectrum_tau0(2.5, 0.5, float(q))
        assert lp.real < 0 and lm.real < 0


def test_asymptotic_spectrum_h_and_window():
    a = asymptotic_spectrum_tau0(2.5, 0.5, 0.0)
    assert a.h == pytest.approx(-5.0, abs=1e-12)
    assert a.q_h is None and a.note is not None   # discriminant < 0, flagged
    assert a.gamma(0.0) == 0.0

    b = asymptotic_spectrum_tau0(2.5, 0.5, 0.1)
    assert b.h == pytest.approx(19.0, abs=1e-12)
    grid = np.linspace(0.05, 8.0, 400)
    assert np.max(b.gamma(grid)) < 0.0            # damped comb off omega = 0

    c = asymptotic_spectrum_tau0(2.5, 0.59, 0.01)
    assert c.q_h is not None                      # discriminant >= 0 here
    assert c.q_h[0] <= c.q_h[1]


def test_gamma_zero_at_origin_grid():
    rng = np.random.default_rng(7)
    for _ in range(20):
        r = rng.uniform(1.3, 5.0)
        p = rng.uniform(0.05, 0.95)
        qc = q_critical(r, p, 0.0)
        if qc <= 0.01:
            continue
        q = rng.uniform(0.0, qc - 0.01)
        a = asymptotic_spectrum_tau0(r, p, q)
        assert a.gamma(0.0) == pytest.approx(0.0, abs=1e-14)


def test_e0_hopf_bound():
    q_max, w2 = e0_hopf_bound(2.5, 0.5, 0.0)
    assert w2 == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert q_max == pytest.approx(1.0 - 0.4 / 0.75, abs=1e-12)
    # eps -> 0: no delayed feedback, the bound collapses
    _, w2_small = e0_hopf_bound(2.5, 1e-8, 0.0)
    assert w2_small <= 1e-15
    with pytest.raises(EpsNotBelowOne):
        e0_hopf_bound(2.5, 1.0, 0.0)


# ---------------------------------------------------------------------------
# Hopf detection
# ---------------------------------------------------------------------------

def test_hopf_cascade_tau0():
    # regression numbers computed by this machinery and cross-validated by
    # direct perturbation integration of the flow
    first = hopf_kappa0(2.5, 0.5, 0.0, 0.0, 25.0)
    assert first is not None
    assert first.kappa_0 == pytest.approx(8.948101, abs=1e-3)
    assert first.omega == pytest.approx(0.5590170, abs=1e-4)
    chi = endemic_chareq(ModelParams(r=2.5, p=0.5, tau=0.0,
                                     kappa=first.kappa_0), 0.0)
    assert abs(complex(chi(1j * first.omega))) <= 1e-8


def test_hopf_sequence_arithmetic():
    h = HopfData(kappa_0=3.0, omega=0.5)
    assert hopf_sequence(h, 0) == 3.0
    diffs = [hopf_sequence(h, m + 1) - hopf_sequence(h, m) for m in range(4)]
    assert all(d == pytest.approx(2 * math.pi / 0.5, abs=1e-12) for d in diffs)
    with pytest.raises(ValueError):
        hopf_sequence(h, -1)


def test_hopf_residual_at_cascade_members():
    first = hopf_kappa0(2.5, 0.5, 0.0, 0.0, 25.0)
    for m in (1, 2):
        km = hopf_sequence(first, m)
        chi = endemic_chareq(ModelParams(r=2.5, p=0.5, tau=0.0, kappa=km), 0.0)
        assert abs(complex(chi(1j * first.omega))) <= 1e-8


def test_hopf_absent_when_scan_range_is_stable():
    # q = 0.18 destabilizes only past kappa ~ 19 for these parameters
    assert hopf_kappa0(2.5, 0.5, 0.0, 0.18, 12.0) is None


def test_hopf_rejects_leaf_beyond_qc():
    with pytest.raises(ValueError):
        hopf_kappa0(2.5, 0.5, 0.0, 0.25, 10.0)    # q_c = 0.2


# ---------------------------------------------------------------------------
# stability map
# ---------------------------------------------------------------------------

def test_stability_map_known_cells():
    res = stability_map(2.5, 0.5, 0.0, [0.0], [0.1, 9.448101, 20.688], threads=1)
    assert res.counts.shape == (1, 3)
    assert res.counts[0, 0] == 0        # small kappa: stable
    assert res.counts[0, 1] == 2        # past kappa_0
    assert res.counts[0, 2] == 4        # past kappa_1
    assert res.errors == ()


def test_stability_map_monotone_between_crossings():
    ks = np.linspace(0.5, 24.5, 13)
    res = stability_map(2.5, 0.5, 0.0, [0.0, 0.05], ks)
    for row in res.counts:
        valid = row[row >= 0]
        assert np.all(np.diff(valid) >= 0)


def test_stability_map_thread_determinism():
    qs = [0.0, 0.1]
    ks = [0.5, 5.0, 12.0]
    a = stability_map(2.5, 0.5, 0.0, qs, ks, threads=1)
    b = stability_map(2.5, 0.5, 0.0, qs, ks, threads=4)
    assert np.array_equal(a.counts, b.counts)


def test_hopf_tracked_leaf_regression():
    # outbreak-scenario destabilization (equilibrium re-read from leaf 0 at
    # each kappa): regression value cross-validated by long trajectory runs
    # (tails decay at kappa <= 13, steady oscillation at kappa = 14)
    h = hopf_kappa0(2.5, 0.5, 0.5, 0.0, 14.5, track_leaf=True)
    assert h is not None
    assert h.kappa_0 == pytest.approx(13.538, abs=2e-2)
