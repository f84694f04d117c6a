import numpy as np
import pytest

from dgmorph.stoker import _middle_depth, stoker_exact, stoker_shock_speed

G = 9.81


def bisect_middle_depth(hl, hr, g, iters=200):
    """Independent oracle: plain bisection on the matching condition."""
    cl = np.sqrt(g * hl)

    def f(hm):
        return 2.0 * (cl - np.sqrt(g * hm)) - (hm - hr) * np.sqrt(
            0.5 * g * (hm + hr) / (hm * hr)
        )

    lo, hi = hr, hl
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_equal_states_constant():
    h, u = stoker_exact(2.0, 2.0, G, np.linspace(-10, 10, 11))
    assert np.allclose(h, 2.0)
    assert np.allclose(u, 0.0)


def test_dry_front_speed():
    hl = 0.1
    front = 2.0 * np.sqrt(G * hl)
    assert front == pytest.approx(1.981, abs=1e-3)
    xi = np.array([front - 1e-6, front + 1e-6])
    h, _ = stoker_exact(hl, 0.0, G, xi)
    assert h[0] > 0.0
    assert h[1] == 0.0


def test_middle_depth_newton_matches_bisection_oracle():
    hm = _middle_depth(40.0, 2.0, G)
    hm_oracle = bisect_middle_depth(40.0, 2.0, G)
    assert hm == pytest.approx(hm_oracle, rel=1e-10)
    assert 2.0 < hm < 40.0


def test_rankine_hugoniot_at_the_shock():
    hl, hr = 40.0, 2.0
    hm = _middle_depth(hl, hr, G)
    um = 2.0 * (np.sqrt(G * hl) - np.sqrt(G * hm))
    s = stoker_shock_speed(hl, hr, G)
    # mass and momentum jump conditions across the right shock
    assert s * (hm - hr) == pytest.approx(hm * um, rel=1e-10)
    mom_jump = hm * um**2 + 0.5 * G * hm**2 - 0.5 * G * hr**2
    assert s * hm * um == pytest.approx(mom_jump, rel=1e-10)


def test_profile_structure_wet():
    xi = np.linspace(-30, 30, 2001)
    h, u = stoker_exact(40.0, 2.0, G, xi)
    assert h[0] == 40.0 and u[0] == 0.0
    assert h[-1] == 2.0 and u[-1] == 0.0
    assert np.all(np.diff(h) <= 1e-12)  # monotone decreasing left to right
    assert np.all(h > 0)


def test_rarefaction_continuity_with_left_state():
    cl = np.sqrt(G * 40.0)
    h, u = stoker_exact(40.0, 2.0, G, np.array([-cl + 1e-9]))
    assert h[0] == pytest.approx(40.0, rel=1e-6)
    assert u[0] == pytest.approx(0.0, abs=1e-4)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        stoker_exact(0.0, 1.0, G, np.zeros(1))
    with pytest.raises(ValueError):
        stoker_exact(1.0, -1.0, G, np.zeros(1))
