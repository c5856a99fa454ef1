"""Tests for the config_utils utility module."""

import pytest

from afdm.errors import ConfigError
from afdm.utils.config_utils import normalize_sweep_var, parse_grid


def test_normalize_sweep_var():
    """Test the normalize_sweep_var function."""
    # Test canonical names
    assert normalize_sweep_var("snr_p") == "snr_p"
    assert normalize_sweep_var("alpha_max") == "alpha_max"

    # Test case folding
    assert normalize_sweep_var("SNR_D") == "snr_d"

    # Test dash and space spellings
    assert normalize_sweep_var("snr-p") == "snr_p"
    assert normalize_sweep_var("alpha max") == "alpha_max"

    # Test aliases
    assert normalize_sweep_var("alpha") == "alpha_max"
    assert normalize_sweep_var("speed_kmh") == "speed"


def test_normalize_sweep_var_unknown():
    with pytest.raises(ConfigError, match="unknown sweep variable"):
        normalize_sweep_var("bandwidth")
    with pytest.raises(ConfigError):
        normalize_sweep_var("")


def test_parse_grid():
    """Test the parse_grid function."""
    # Test comma lists, order kept
    assert parse_grid("20,30, 25") == [20.0, 30.0, 25.0]

    # Test inclusive ranges
    assert parse_grid("0:20:5") == [0.0, 5.0, 10.0, 15.0, 20.0]
    assert parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]

    # Test a range whose stop is not on the step
    assert parse_grid("0:9:4") == [0.0, 4.0, 8.0]

    # Test a single value
    assert parse_grid("64") == [64.0]


@pytest.mark.parametrize("spec", ["", " , ", "1:2", "a,b", "0:10:0", "0:10:-1", "10:0:1"])
def test_parse_grid_rejects(spec):
    with pytest.raises(ConfigError):
        parse_grid(spec)
