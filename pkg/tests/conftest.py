import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import balicodec as bc

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def grid128():
    return bc.GridSpec(128, 128)


@pytest.fixture
def face(rng, grid128):
    return bc.synthetic_face(rng, grid128)


@pytest.fixture
def ibug_boundaries():
    return bc.default_boundary_scheme(bc.Scheme.IBUG68)


def reference_decode(channel, u_plane, v_plane, peak, r):
    """Independent plain-loop evaluation of the field-weighted crop mean."""
    h, w = channel.shape
    num_u = num_v = den = 0.0
    for j in range(max(0, peak[1] - r), min(h, peak[1] + r + 1)):
        for i in range(max(0, peak[0] - r), min(w, peak[0] + r + 1)):
            wt = float(channel[j, i])
            du = float(u_plane[j, i]) if u_plane is not None else 0.0
            dv = float(v_plane[j, i]) if v_plane is not None else 0.0
            num_u += wt * (du + i)
            num_v += wt * (dv + j)
            den += wt
    return num_u / den, num_v / den


def brute_force_edt(raster):
    """O(N^2) nearest-set-cell scan; the oracle for the distance transform."""
    raster = np.asarray(raster, bool)
    js, is_ = np.nonzero(raster)
    out = np.empty(raster.shape)
    for j in range(raster.shape[0]):
        for i in range(raster.shape[1]):
            out[j, i] = np.sqrt(((is_ - i) ** 2 + (js - j) ** 2).min())
    return out
