import numpy as np
import pytest

from smaselect import DesignMatrix, NoiseSpec, WeightingScheme, build_projection_family


@pytest.fixture
def toy_design():
    # 3x4 design: columns e1, e2, e3, 0 -> every leading Gram is the identity.
    return DesignMatrix(np.hstack([np.eye(3), np.zeros((3, 1))]))


@pytest.fixture
def toy_family(toy_design):
    return build_projection_family(toy_design, WeightingScheme.full_vector(), [1, 2, 3])


@pytest.fixture
def toy_noise():
    return NoiseSpec.known([1.0, 1.0, 1.0, 1.0])


@pytest.fixture
def toy_extended_family():
    # Same coordinate-selector structure, models 1..6 on an 6x8 design.
    design = DesignMatrix(np.hstack([np.eye(6), np.zeros((6, 2))]))
    return build_projection_family(design, WeightingScheme.full_vector(), range(1, 7))


def orthonormal_rows_design(rng, p, n):
    """Random design whose rows are orthonormal (every leading Gram = I)."""
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return DesignMatrix(q.T[:p])
