import numpy as np
import pytest

from snspdsim.circuit import BiasWaveform, CircuitParams
from snspdsim.thermal import ThermalParams, WireGeometry, ic_of_T


@pytest.fixture(scope="session")
def paper_circuit():
    """Published bias-network values: L_k=490nH, C_p=0.57pF, R_p=725."""
    return CircuitParams()


@pytest.fixture(scope="session")
def thermal_params():
    return ThermalParams()


@pytest.fixture(scope="session")
def small_geom():
    """100 um wire at 10 nm cells: resolves the photon seed, fast to step."""
    return WireGeometry(length=100e-6, n_cells=10_000)


@pytest.fixture(scope="session")
def ic_operating(thermal_params):
    return ic_of_T(thermal_params.T_sub, thermal_params)


def linear_system(params: CircuitParams, r_hs: float = 0.0):
    """State matrix and source vector of the gated-mode core,
    d/dt [v_c, i_L] = A [v_c, i_L] + b * V_src."""
    a = np.array([
        [-1.0 / (params.R_p * params.C_p), -1.0 / params.C_p],
        [1.0 / params.L_k, -r_hs / params.L_k],
    ])
    b = np.array([1.0 / (params.R_p * params.C_p), 0.0])
    return a, b


def analytic_step_response(params: CircuitParams, v0: float, t, r_hs: float = 0.0):
    """Exact (v_c, i_L) trajectories for a DC source step from rest."""
    from scipy.linalg import expm

    a, b = linear_system(params, r_hs)
    x_inf = -np.linalg.solve(a, b * v0)
    out = np.empty((len(t), 2))
    for i, ti in enumerate(t):
        out[i] = x_inf + expm(a * ti) @ (-x_inf)
    return out
