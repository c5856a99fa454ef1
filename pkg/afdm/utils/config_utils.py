"""Utility functions for parsing sweep names and grids."""

import re
from typing import List

import numpy as np

from afdm.errors import ConfigError

_ALIASES = {
    'snrp': 'snr_p',
    'snrd': 'snr_d',
    'speed': 'speed',
    'speedkmh': 'speed',
    'alphamax': 'alpha_max',
    'alpha': 'alpha_max',
}


def normalize_sweep_var(name: str) -> str:
    """
    Normalize a sweep variable name.

    Rules:
    1. Lowercase the name
    2. Drop spaces, dashes and underscores
    3. Map the result onto one of snr_p, snr_d, speed, alpha_max

    :param name: The name as typed by the user
    :type name: str
    :return: The canonical variable name
    :rtype: str
    :raises ConfigError: If the name matches no variable
    """
    folded = re.sub(r'[\s_\-]', '', name.lower())
    if folded not in _ALIASES:
        raise ConfigError(f"unknown sweep variable {name!r}")
    return _ALIASES[folded]


def parse_grid(grid_text: str) -> List[float]:
    """
    Parse a grid given as ``a,b,c`` or ``start:stop:step`` (stop inclusive).

    :param grid_text: Grid text
    :type grid_text: str
    :return: Grid values in the given order
    :rtype: List[float]
    :raises ConfigError: On malformed text, a non-positive step or an empty grid
    """
    text = grid_text.strip()
    try:
        if ':' in text:
            parts = [float(p) for p in text.split(':')]
            if len(parts) != 3:
                raise ConfigError(f"range grid needs start:stop:step, got {grid_text!r}")
            start, stop, step = parts
            if step <= 0:
                raise ConfigError(f"grid step must be positive, got {step}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            values = [start + i * step for i in range(max(count, 0))]
        else:
            values = [float(p) for p in text.split(',') if p.strip()]
    except ValueError as e:
        raise ConfigError(f"malformed grid {grid_text!r}") from e
    if not values:
        raise ConfigError(f"grid {grid_text!r} is empty")
    return values
