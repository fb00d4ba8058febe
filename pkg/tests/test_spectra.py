"""Properties of the long Lyapunov runs cached by scripts/lyapunov_table.py."""
import pytest

from conftest import CACHE
from ksobs.presets import PRESETS


@pytest.fixture(scope="module")
def spectra():
    import lyapunov_table

    return {name: lyapunov_table.compute(name, CACHE) for name in ("L22", "L44", "L66")}


def test_dimension_grows_with_length(spectra):
    d = [spectra[n]["d_ky"] for n in ("L22", "L44", "L66")]
    assert d[0] < d[1] < d[2]


@pytest.mark.parametrize("name", ["L22", "L44", "L66"])
def test_window_is_one_lyapunov_time(spectra, name):
    d = PRESETS[name]
    T = d.horizon_steps * d.config.dt
    t_lyap = 1 / spectra[name]["exponents"][0]
    assert abs(T - t_lyap) <= 0.2 * t_lyap


@pytest.mark.parametrize("name", ["L22", "L44", "L66"])
def test_spectrum_record(spectra, name):
    rec = spectra[name]
    assert rec["horizon"] == pytest.approx(1e5) and rec["reorth_interval"] == 2.0
    assert rec["exponents"] == sorted(rec["exponents"], reverse=True)
    assert rec["single"]["exponents"][0] <= rec["exponents"][0] + 1e-12 or rec["method"] == "single trajectory"
