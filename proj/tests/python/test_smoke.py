import numpy as np
import pytest

import _locnet as ln


@pytest.fixture
def inspection_setup():
    graph = ln.build_graph(2, 2, 3, [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)])
    positions = np.array([[1.0, 5.0, -2.0, -1.5, 8.0], [-0.5, -0.5, 0.0, 0.0, 0.0]])
    return graph, ln.Configuration(positions), ln.NoiseModel(ln.NoiseKind.Additive, 0.1)


def test_graph_shape(inspection_setup):
    graph, _, _ = inspection_setup
    assert graph.tag_count == 2
    assert graph.anchor_count == 3
    assert graph.edge_count() == 9  # six ranging pairs plus three anchor links
    assert graph.measured_count() == 6


def test_fim_matches_rigidity_route(inspection_setup):
    graph, config, noise = inspection_setup
    f = ln.fim(graph, config, noise)
    f2 = ln.fim_from_rigidity(graph, config, noise)
    assert np.linalg.norm(f - f2) <= 1e-12 * np.linalg.norm(f)
    basis = ln.euclidean_motion_basis(config)
    assert np.linalg.norm(f @ basis) <= 1e-10 * np.linalg.norm(f)


def test_rigidity_and_triangulation():
    anchors = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    graph, config = ln.build_triangulation(
        2, anchors, 3, np.array([-1.0, -1.0]), np.array([2.0, 2.0]), seed=4
    )
    assert ln.is_infinitesimally_rigid(graph, config)
    fu = ln.fim_tag_block(graph, config, ln.NoiseModel(ln.NoiseKind.Additive, 0.1))
    assert np.linalg.eigvalsh(fu)[0] > 0.0


def test_potentials_and_descent(inspection_setup):
    graph, config, noise = inspection_setup
    fu = ln.fim_tag_block(graph, config, noise)
    assert ln.potential_value(ln.PotentialKind.AOpt, fu) > 0.0
    value, grad = ln.potential_gradient(ln.PotentialKind.DOpt, graph, config, noise, [2, 3, 4])
    assert set(grad.keys()) == {2, 3, 4}
    moved = ln.descent_step(config, grad, gain=1.0, step_cap=0.2)
    fu_after = ln.fim_tag_block(graph, moved, noise)
    assert ln.potential_value(ln.PotentialKind.DOpt, fu_after) < value


def test_localization_round_trip(inspection_setup):
    graph, config, noise = inspection_setup
    distances = ln.sample_measurements(
        graph, config, ln.NoiseModel(ln.NoiseKind.Additive, 0.0), seed=1
    )
    est, converged, grad_norm = ln.ls_localize(
        graph, config.positions[:, 2:], distances, config.positions[:, :2]
    )
    assert converged
    assert grad_norm < 1e-10
    assert np.linalg.norm(est - config.positions[:, :2]) < 1e-8


def test_singular_potential_raises():
    fu = np.diag([1.0, 0.0])
    with pytest.raises(ln.SingularMatrixError):
        ln.potential_value(ln.PotentialKind.AOpt, fu)


def test_scenarios_and_config_round_trip():
    potentials, csv = ln.run_inspection_scenario(steps=10, seed=3)
    assert len(potentials) == 11
    assert potentials[-1] < potentials[0]
    assert csv.startswith("step,node")

    pots, mse, fc = ln.run_ugv_scenario("RP", max_steps=300, mc_trials=50, seed=3)
    assert pots[-1] < pots[0]
    assert fc < 1e-3
    assert mse[-1] < mse[0]

    text = ln.normalize_config_text("[scenario]\nwhich = ugv\n")
    assert ln.normalize_config_text(text) == text
