import math

import numpy as np
import pytest

from smaselect import (
    AllZeroResiduals,
    DesignMatrix,
    NoiseSpec,
    RequiresKnownTruth,
    WeightingScheme,
    bootstrap_calibrate,
    bootstrap_effective_dims,
    bootstrap_joint_draws,
    build_projection_family,
    pair_variance,
    presmooth,
    validity_diagnostics,
)
from smaselect.bootstrap import bootstrap_single_dims
from smaselect.calibration import familywise_exceedance
from conftest import orthonormal_rows_design


def test_presmooth_toy_coordinates(toy_family):
    res = presmooth(toy_family, [1.0, 2.0, 3.0, 4.0], 3)
    np.testing.assert_allclose(res.residuals, [0.0, 0.0, 0.0, 4.0], atol=1e-12)
    assert res.projector_dim == 3
    assert not res.negligible


def test_presmooth_in_span_vanishes(toy_family):
    res = presmooth(toy_family, [1.0, -2.0, 0.5, 0.0], 3)
    np.testing.assert_allclose(res.residuals, 0.0, atol=1e-12)
    assert res.negligible


def test_presmooth_projector_idempotent():
    rng = np.random.default_rng(311)
    design = DesignMatrix(rng.standard_normal((8, 20)))
    family = build_projection_family(design, WeightingScheme.full_vector(), [2, 5, 8])
    res = presmooth(family, rng.standard_normal(20), 8)
    proj = res.projector_matrix()
    assert np.max(np.abs(proj @ proj - proj)) <= 1e-10


def test_presmooth_residuals_orthogonal_to_span():
    rng = np.random.default_rng(313)
    design = DesignMatrix(rng.standard_normal((6, 30)))
    family = build_projection_family(design, WeightingScheme.full_vector(), [3, 6])
    y = rng.standard_normal(30)
    res = presmooth(family, y, 6)
    gram_products = design.leading_block(6) @ res.residuals
    assert np.max(np.abs(gram_products)) <= 1e-10 * np.linalg.norm(y) * np.max(
        np.abs(design.entries)
    ) * 30


def test_bootstrap_draws_zero_residuals_is_fatal(toy_family):
    with pytest.raises(AllZeroResiduals):
        bootstrap_joint_draws(toy_family, np.zeros(4), 100, seed=1)


def test_bootstrap_draws_negligible_presmooth_is_fatal(toy_family):
    res = presmooth(toy_family, [1.0, -2.0, 0.5, 0.0], 3)
    with pytest.raises(AllZeroResiduals):
        bootstrap_joint_draws(toy_family, res, 100, seed=1)


def test_bootstrap_pair_column_coordinate_structure(toy_family):
    resid = np.array([0.5, -1.0, 2.0, 0.3])
    draws = bootstrap_joint_draws(toy_family, resid, 256, seed=317)
    from smaselect.rng import stream

    w = stream(317, 0, 0).standard_normal((256, 4))
    np.testing.assert_allclose(draws.column(2, 1), np.abs(-1.0 * w[:, 1]), rtol=1e-12)


def test_bootstrap_mean_square_matches_weighted_dims(toy_family):
    resid = np.array([0.5, -1.0, 2.0, 0.3])
    draws = bootstrap_joint_draws(toy_family, resid, 100_000, seed=331)
    col2 = draws.column(3, 1) ** 2
    se = np.std(col2, ddof=1) / math.sqrt(col2.shape[0])
    assert abs(col2.mean() - 5.0) <= 3 * se


def test_effective_dims_toy(toy_family):
    resid = np.array([0.5, -1.0, 2.0, 0.3])
    dims = bootstrap_effective_dims(toy_family, resid)
    assert dims[(2, 1)] == pytest.approx(1.0, rel=1e-12)
    assert dims[(3, 1)] == pytest.approx(5.0, rel=1e-12)


def test_effective_dims_reduce_to_known_noise():
    rng = np.random.default_rng(337)
    design = orthonormal_rows_design(rng, p=6, n=25)
    family = build_projection_family(design, WeightingScheme.full_vector(), [1, 3, 6])
    sd = rng.uniform(0.5, 2.0, size=25)
    dims = bootstrap_effective_dims(family, sd)
    noise = NoiseSpec.known(sd**2)
    for pair, val in dims.items():
        assert val == pytest.approx(pair_variance(family, noise, *pair).p_pair, rel=1e-12)
    singles = bootstrap_single_dims(family, sd)
    assert singles[6] > singles[1] > 0


def test_effective_dims_match_constant_residual_projection(toy_family):
    dims = bootstrap_effective_dims(toy_family, np.full(4, 1.5))
    for (m, m_ref), val in dims.items():
        assert val == pytest.approx(1.5**2 * (m - m_ref), rel=1e-12)


def test_scale_equivariance_exact(toy_family):
    resid = np.array([0.5, -1.0, 2.0, 0.3])
    c = 3.7
    base = bootstrap_calibrate(toy_family, resid, 2.0, 0.0, 4000, seed=347)
    scaled = bootstrap_calibrate(toy_family, c * resid, 2.0, 0.0, 4000, seed=347)
    assert scaled.corrections == base.corrections
    for pair in base.pairs():
        assert scaled.threshold(*pair) == pytest.approx(
            c * base.threshold(*pair), rel=1e-12
        )
        assert math.sqrt(scaled.p_boot[pair]) == pytest.approx(
            c * math.sqrt(base.p_boot[pair]), rel=1e-12
        )


def test_bootstrap_in_sample_propagation(toy_family):
    resid = np.array([0.8, -1.3, 0.6, 1.1])
    n_sim = 20_000
    table = bootstrap_calibrate(toy_family, resid, 2.0, 0.0, n_sim, seed=349)
    draws = bootstrap_joint_draws(toy_family, resid, n_sim, seed=349)
    for m_ref in (1, 2):
        thresholds = {
            (m, m_ref): table.threshold(m, m_ref)
            for m in toy_family.successors(m_ref)
        }
        assert familywise_exceedance(draws, m_ref, thresholds) <= math.exp(-2.0)


def test_single_pair_family_needs_no_correction():
    design = DesignMatrix(np.hstack([np.eye(2), np.zeros((2, 2))]))
    family = build_projection_family(design, WeightingScheme.full_vector(), [1, 2])
    table = bootstrap_calibrate(family, np.array([1.0, 0.5, 0.2, -0.4]), 2.0, 0.0, 2000, seed=353)
    assert table.corrections == {1: 0.0}


def test_bootstrap_table_serialization(toy_family):
    resid = np.array([0.5, -1.0, 2.0, 0.3])
    table = bootstrap_calibrate(toy_family, resid, 2.0, 1.0, 2000, seed=359)
    d = table.to_dict()
    assert "p_boot" in d and d["p_boot"]["3:1"] == pytest.approx(5.0, rel=1e-12)


def test_validity_diagnostics_toy(toy_family, toy_noise):
    diag = validity_diagnostics(
        toy_family, toy_noise, np.array([0.0, 0.0, 0.0, 0.0]), m_dagger=3, x_level=2.0
    )
    # Whitened design columns are unit vectors; the pilot projector keeps
    # coordinates 1..3 so both noise distortions saturate at one.
    assert diag.delta_psi == pytest.approx(1.0, rel=1e-10)
    assert diag.delta_one == pytest.approx(1.0, rel=1e-10)
    assert diag.delta_eps == pytest.approx(1.0, rel=1e-10)
    assert diag.bias_sup == 0.0 and diag.bias_l2 == 0.0


def test_validity_diagnostics_span_bias_vanishes():
    rng = np.random.default_rng(367)
    design = orthonormal_rows_design(rng, p=8, n=40)
    family = build_projection_family(design, WeightingScheme.full_vector(), [2, 4, 8])
    theta = rng.standard_normal(4)
    f = design.entries[:4].T @ theta
    diag = validity_diagnostics(family, NoiseSpec.homogeneous(1.0, 40), f, 4, 2.0)
    assert diag.bias_sup <= 1e-10
    assert diag.bias_l2 <= 1e-10
    # Homogeneous case: per-coordinate distortion is the projector diagonal.
    from smaselect.bootstrap import pilot_basis

    basis = pilot_basis(family, 4)
    proj_diag = np.einsum("ij,ij->i", basis, basis)
    assert diag.delta_eps == pytest.approx(np.max(np.abs(proj_diag)), rel=1e-8)


def test_validity_diagnostics_applicability_ratio():
    rng = np.random.default_rng(373)
    design = orthonormal_rows_design(rng, p=37, n=200)
    family = build_projection_family(design, WeightingScheme.full_vector(), list(range(1, 38)))
    diag = validity_diagnostics(
        family, NoiseSpec.homogeneous(1.0, 200), np.zeros(200), 20, 2.0
    )
    assert diag.applicability_ratio == pytest.approx(37**2 * math.log(200) / 200, rel=1e-12)
    assert diag.applicability_ratio == pytest.approx(36.3, abs=0.05)
    assert not diag.asymptotic_regime_reached


def test_validity_diagnostics_requires_truth(toy_family):
    with pytest.raises(RequiresKnownTruth):
        validity_diagnostics(toy_family, NoiseSpec.unknown(), np.zeros(4), 3, 2.0)
    with pytest.raises(RequiresKnownTruth):
        validity_diagnostics(toy_family, NoiseSpec.known([1.0] * 4), None, 3, 2.0)
