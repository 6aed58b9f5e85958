import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anms_vo.core import CameraRig


@pytest.fixture
def rig():
    """KITTI-like rectified stereo rig."""
    return CameraRig(
        fx=718.856, fy=718.856, cx=607.1928, cy=185.2157,
        baseline=0.5372, width=1241, height=376,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
