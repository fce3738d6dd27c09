import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from thermoelectric.config import ConfigError, compile_expression, load_config, outward_flux, parse_config
from thermoelectric.mesh import FaceField, Grid

MINIMAL = """
[grid]
n = 8

[sigma]
kind = constant
sigma0 = 2.0

[boundary]
mode = electric
u0 = 0
e = 0.1 0 0
"""


def diag_for(text):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    return err.value.diagnostics


def test_minimal_config_parses():
    cfg = parse_config(MINIMAL)
    assert cfg.grid == Grid.cube(8)
    assert cfg.sigma.kind == "constant" and cfg.sigma.sigma1 == 2.0
    assert cfg.boundary.e == (0.1, 0.0, 0.0)
    assert cfg.picard_tol == 1e-10 and cfg.damping == 1.0 and cfg.joule == "divergence"
    spec = cfg.problem_spec()
    assert spec.mode == "electric" and spec.e_const == (0.1, 0.0, 0.0)


def test_sigma_lower_bound_zero_cites_sigma1():
    text = MINIMAL.replace("kind = constant\nsigma0 = 2.0", "kind = sigmoid\nsigma1 = 0\nsigma2 = 2")
    d = diag_for(text)
    assert len(d) == 1
    assert d[0].key == "[sigma].sigma1"
    assert d[0].line == 7
    assert "> 0" in d[0].message


def test_incompatible_flux_cites_sum():
    text = MINIMAL.replace("mode = electric\nu0 = 0\ne = 0.1 0 0", "mode = tangential\nu0 = 0\ng = 1 + x")
    d = diag_for(text)
    assert d[0].key == "[boundary].g"
    assert "compatibility sum = " in d[0].message
    total = float(d[0].message.split("compatibility sum = ")[1].split()[0])
    # outward flux 1 + x integrated over the unit cube surface: 5 faces average 1.5, x=1 face 2, x=0 face 1
    assert total == pytest.approx(4 * 1.5 + 2 + 1, rel=1e-12)


def test_compatible_h0_tangential_parses():
    text = MINIMAL.replace("mode = electric\nu0 = 0\ne = 0.1 0 0",
                           "mode = tangential\nu0 = 0\nh0x = -pi*sin(pi*x)*cos(pi*y)\nh0y = pi*cos(pi*x)*sin(pi*y)")
    spec = parse_config(text).problem_spec()
    assert spec.mode == "tangential" and spec.curl_h0_l2 > 0


def test_every_problem_reported_with_lines():
    text = """[grid]
n = 8
n = 9
colour = red
[sigma]
kind = constant
sigma0 = -1
[picard]
damping = 1.5
[extra]
foo = 1
"""
    d = diag_for(text)
    got = {(x.line, x.key) for x in d}
    assert (3, "[grid].n") in got
    assert (4, "[grid].colour") in got
    assert (10, "[extra]") in got
    assert (None, "[boundary]") in got
    assert "duplicate key (first set on line 2)" in [x.message for x in d if x.line == 3][0]


def test_range_errors_after_structure_ok():
    text = MINIMAL + "\n[picard]\ndamping = 1.5\nlinear_tol = 2\nmaxiter = 0\n"
    d = diag_for(text)
    assert {x.key for x in d} == {"[picard].damping", "[picard].linear_tol", "[picard].maxiter"}
    assert all(x.line is not None for x in d)


def test_mode_specific_keys():
    d = diag_for(MINIMAL.replace("e = 0.1 0 0", "e = 0.1 0 0\ng = 0"))
    assert d[0].key == "[boundary].g" and "tangential" in d[0].message


def test_unknown_sigma_key_for_kind():
    d = diag_for(MINIMAL.replace("sigma0 = 2.0", "sigma0 = 2.0\nwidth = 1"))
    assert d[0].key == "[sigma].width"


def test_bad_expression():
    d = diag_for(MINIMAL.replace("u0 = 0", "u0 = __import__('os')"))
    assert d[0].key == "[boundary].u0" and d[0].line == 11


def test_study_section():
    cfg = parse_config(MINIMAL + "\n[study]\nlevels = 4 8 16\ncases = smooth-nonlinear\nscales = 0.1 1\n")
    assert cfg.study.levels == (4, 8, 16)
    assert cfg.study.cases == ("smooth-nonlinear",)
    d = diag_for(MINIMAL + "\n[study]\nlevels = 4 8 12\n")
    assert d[0].key == "[study].levels"


def test_comments_and_whitespace():
    text = "# header\n" + MINIMAL.replace("n = 8", "  n   =  4 5 6   # cells")
    assert parse_config(text).grid.n == (4, 5, 6)


def test_load_config(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(MINIMAL)
    assert load_config(p).grid.n == (8, 8, 8)


def test_problem_spec_scaling():
    cfg = parse_config(MINIMAL.replace("u0 = 0", "u0 = 1 + x\npsi0 = y"))
    a, b = cfg.problem_spec(scale=1.0), cfg.problem_spec(grid=Grid.cube(4), scale=3.0)
    assert b.e_const == pytest.approx((0.3, 0.0, 0.0))
    assert b.grid.n == (4, 4, 4)
    assert_allclose(b.psi0.values, 3 * b.grid.node_coords()[1])
    assert_allclose(b.u0.values, a.u0.values[::2, ::2, ::2])


# expressions ---------------------------------------------------------------------------------


def test_expression_evaluates():
    f = compile_expression("sin(pi*x) + y**2 - abs(z) / 2")
    x = np.array([0.5, 0.25])
    assert_allclose(f(x, x, -x), [1 + 0.25 - 0.25, math.sin(math.pi / 4) + 0.0625 - 0.125])
    assert compile_expression("3")(x, x, x).shape == (2,)


@pytest.mark.parametrize("bad", ["os.system('x')", "x.real", "[1]", "lambda: 1", "open('f')", "x if y else z",
                                 "q + 1", "sin(x, y)", "1 +", "True"])
def test_expression_rejects(bad):
    with pytest.raises(ValueError):
        compile_expression(bad)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_property_expression_matches_python(a, b, c):
    f = compile_expression("exp(-x*x) * cos(y) + tanh(z) - 2*x*y")
    want = math.exp(-a * a) * math.cos(b) + math.tanh(c) - 2 * a * b
    assert float(f(np.array(a), np.array(b), np.array(c))) == pytest.approx(want, rel=1e-14, abs=1e-14)


def test_outward_flux_signs():
    g = Grid.cube(2)
    H = FaceField(g, *(np.ones(g.face_shape(d)) for d in range(3)))
    F = outward_flux(H)
    assert np.all(F[0][0] == -1) and np.all(F[0][-1] == 1)
    assert np.all(F[0][1] == 0)
