import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from watervox import (GridSpec, TriangleBVH, band_for, compute_udf,
                      flood_fill_exterior, identify_open_components,
                      thicken_open_components, voxelize_surface,
                      watershed_assign)


@pytest.fixture(scope="session")
def spec64():
    return GridSpec(64)


def run_labels(mesh, spec, tau=2.0, delta=1.5, thicken=True):
    """Voxelize + distances + watershed labels; the common stage stack."""
    bvh = TriangleBVH(mesh)
    occ = voxelize_surface(mesh, spec)
    dist = compute_udf(mesh, occ, band_for(tau, delta), bvh=bvh)
    sign = watershed_assign(dist, flood_fill_exterior(dist, occ, tau), tau)
    open_set = identify_open_components(occ, sign)
    if thicken and delta >= 0.5 and open_set.n_open:
        sign = thicken_open_components(dist, sign, open_set, delta)
    return bvh, occ, dist, sign, open_set
