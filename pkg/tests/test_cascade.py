from fractions import Fraction

import numpy as np
import pytest

from cyberalloc.cascade import (
    CascadeModel,
    ControlVector,
    InvestmentMenu,
    apply_investment,
    build_tensor,
    load_cascade,
    viable_paths,
)
from cyberalloc.config import bundled
from cyberalloc.errors import ConfigError

from .conftest import EXAMPLE_A, EXAMPLE_B
from .oracles import tensor_exact


def example_model():
    return CascadeModel(["T1", "T2", "T3"], ["V1", "V2", "V3"], ["A1", "A2", "A3"], EXAMPLE_A, EXAMPLE_B)


def test_example_tensor_matches_exact_products():
    theta = [Fraction(1, 2), Fraction(1, 3), Fraction(1, 4)]
    D = build_tensor(example_model(), [float(t) for t in theta]).D
    exact = tensor_exact(EXAMPLE_A, EXAMPLE_B, theta)
    for idx, value in exact.items():
        assert abs(D[idx] - float(value)) <= 1e-15
    nonzero = {idx: v for idx, v in exact.items() if v}
    assert nonzero == {
        (0, 1, 0): Fraction(1, 3),
        (1, 1, 0): Fraction(1, 3),
        (2, 1, 0): Fraction(1, 3),
        (2, 2, 0): Fraction(1, 4),
        (2, 2, 1): Fraction(1, 4),
    }


def test_example_paths_in_lexicographic_order():
    D = build_tensor(example_model(), [0.5, 1 / 3, 0.25])
    got = [(p.threat + 1, p.vulnerability + 1, p.asset + 1) for p in viable_paths(D)]
    assert got == [(1, 2, 1), (2, 2, 1), (3, 2, 1), (3, 3, 1), (3, 3, 2)]


def test_zero_controls_kill_every_path():
    D = build_tensor(example_model(), [0, 0, 0])
    assert not D.D.any()
    assert viable_paths(D) == []


def test_case_study_tensor(case_config):
    cascade = case_config.cascade
    D = build_tensor(cascade, [1, 1, 1]).D
    assert {tuple(x) for x in np.argwhere(D)} == {(0, 2, 0), (1, 0, 1), (1, 1, 1)}
    assert np.all(D[D > 0] == 1.0)
    paths = viable_paths(build_tensor(cascade, [0.2, 1, 1]))
    assert [(p.threat, p.vulnerability, p.asset) for p in paths] == [(0, 2, 0), (1, 0, 1), (1, 1, 1)]
    assert paths[1].scaling == pytest.approx(0.2)


def test_theta_length_mismatch():
    with pytest.raises(ConfigError):
        build_tensor(example_model(), [1, 1])


def test_theta_outside_unit_interval():
    with pytest.raises(ConfigError):
        ControlVector([0.5, 1.2, 0.1])


def test_tensor_bounded_by_structure():
    rng = np.random.default_rng(3)
    for _ in range(50):
        A = rng.integers(0, 2, (3, 4))
        B = rng.integers(0, 2, (4, 2))
        model = CascadeModel(["a", "b", "c"], list("wxyz"), ["p", "q"], A, B)
        theta = rng.random(4)
        D = build_tensor(model, theta).D
        assert np.all(D <= np.minimum(A[:, :, None], B[None, :, :]))
        lower = build_tensor(model, theta * rng.random(4)).D
        assert np.all(lower <= D)


def test_path_set_depends_only_on_sign_pattern():
    model = example_model()
    a = viable_paths(build_tensor(model, [0.5, 0.3, 0.9]))
    b = viable_paths(build_tensor(model, [0.1, 1.0, 0.2]))
    key = lambda ps: [(p.threat, p.vulnerability, p.asset) for p in ps]
    assert key(a) == key(b)


def test_apply_investment_case_menu(case_config):
    menu = case_config.menu
    theta, M = apply_investment(menu, (1, 0, 0))
    assert theta.theta.tolist() == [0.2, 1.0, 1.0]
    assert M.tolist() == [2e6, 0.0, 0.0]
    theta, M = apply_investment(menu, (0, 0, 0))
    assert theta.theta.tolist() == [1.0, 1.0, 1.0] and M.sum() == 0
    theta, M = apply_investment(menu, (1, 1, 1))
    assert theta.theta.tolist() == [0.2, 0.2, 0.2]
    assert M.sum() == 11e6


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_menu_rejects_factor_outside_open_interval(bad):
    with pytest.raises(ConfigError):
        InvestmentMenu([1.0, 2.0], [0.5, bad])


def test_apply_investment_rejects_wrong_length(case_config):
    with pytest.raises(ConfigError):
        apply_investment(case_config.menu, (1, 0))
    with pytest.raises(ConfigError):
        apply_investment(case_config.menu, (2, 0, 0))


def test_bundled_mapping_datasets():
    model, menu = load_cascade(bundled("cis_cascade.json"))
    assert model.shape == (25, 20, 5)
    assert set(np.unique(model.A)) <= {0, 1} and set(np.unique(model.B)) <= {0, 1}
    assert model.A.sum() > 0 and model.B.sum() > 0


def test_unknown_label():
    with pytest.raises(ConfigError, match="unknown threat"):
        example_model().threat_index("T9")
