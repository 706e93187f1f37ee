import numpy as np
import pytest

from ggplan.envelope import EnvelopeModel
from ggplan.params import VehicleParams


@pytest.fixture(scope="session")
def berline() -> VehicleParams:
    return VehicleParams()


@pytest.fixture(scope="session")
def reference_envelope() -> EnvelopeModel:
    """The published acceleration envelope used as an oracle throughout."""
    a = np.array([
        [2.6, 1.0, 0.0],
        [2.6, -1.0, 0.0],
        [0.0, 1.1, 1.0],
        [0.0, -1.1, -1.0],
        [0.0, -0.57, 1.0],
        [0.0, 0.57, -1.0],
    ])
    b = np.array([15.3, 15.3, 9.9, 9.9, 5.1, 5.1])
    return EnvelopeModel(
        alpha=9.4,
        beta=9.0,
        a_rows=a,
        b=b,
        ax_min_poly=np.array([-9.3, -0.013, 0.00072]),
        ax_max_poly=np.array([4.3, -0.009]),
    )
