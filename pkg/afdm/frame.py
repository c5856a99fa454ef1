"""Embedded two-pilot frame: pilot placement, guard sizing and observation window."""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from afdm.errors import DimensionError, FrameTooSmallError, ParameterError
from afdm.transforms import AfdmGrid
from afdm.utils.linalg import require_vector

logger = logging.getLogger(__name__)

NUM_PILOTS = 2  # fixed two-pilot layout, not a tunable


@dataclass(frozen=True)
class PilotFrame:
    """
    Index layout of one AFDM symbol.

    Indices 0..Q_B−1 are null, Q_B holds pilot 1, Q_B+1..2Q_B are null, 2Q_B+1 holds pilot 2,
    2Q_B+2..3Q_B+1 are null and the rest carries data.
    """

    n: int
    q_guard: int
    order: int
    pilot_values: Tuple[complex, complex]
    pilot_positions: Tuple[int, int] = field(init=False)
    guard_indices: np.ndarray = field(init=False, repr=False, compare=False)
    data_indices: np.ndarray = field(init=False, repr=False, compare=False)
    obs_indices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        qb = self.q_guard
        positions = (qb, 2 * qb + 1)
        end = 3 * qb + 2
        guard = np.array([k for k in range(end) if k not in positions], dtype=int)
        object.__setattr__(self, "pilot_positions", positions)
        object.__setattr__(self, "guard_indices", guard)
        object.__setattr__(self, "data_indices", np.arange(end, self.n, dtype=int))
        half = self.order // 2
        object.__setattr__(self, "obs_indices", np.arange(half, 2 * qb + half + 2, dtype=int))

    @property
    def num_data(self) -> int:
        return int(self.data_indices.size)

    @property
    def obs_size(self) -> int:
        return int(self.obs_indices.size)

    def pilot_vector(self) -> np.ndarray:
        """x_p: the pilots at their positions, zero elsewhere."""
        x_p = np.zeros(self.n, dtype=complex)
        x_p[list(self.pilot_positions)] = self.pilot_values
        return x_p

    def data_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.data_indices] = True
        return mask

    def selector_matrix(self) -> np.ndarray:
        """T_p = [I_N]_{ind_p}, the (2Q_B+2) x N row selector."""
        return np.eye(self.n)[self.obs_indices]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'q_guard': self.q_guard,
            'order': self.order,
            'pilot_positions': list(self.pilot_positions),
            'pilot_values': [[v.real, v.imag] for v in map(complex, self.pilot_values)],
            'guard_indices': self.guard_indices.tolist(),
            'data_indices': self.data_indices.tolist(),
            'obs_indices': self.obs_indices.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def guard_size(grid: AfdmGrid, order: int, l_max: int) -> int:
    """Q_B = Q + 2Nc1·l_max."""
    return order + grid.delay_doppler_step * l_max


def design_pilot_frame(grid: AfdmGrid, order: int, l_max: int, pilot_power: float) -> PilotFrame:
    """
    Lay out the two pilots and their guards for BEM order Q and maximum delay l_max.

    :param grid: AFDM grid (supplies N and c1)
    :type grid: AfdmGrid
    :param order: BEM order Q, must be even
    :type order: int
    :param l_max: Maximum path delay in samples
    :type l_max: int
    :param pilot_power: |x_p|² of each pilot
    :type pilot_power: float
    :return: The frame
    :rtype: PilotFrame
    :raises FrameTooSmallError: If 3Q_B + 2 < N does not hold
    """
    if order < 0 or order % 2:
        raise ParameterError(f"BEM order must be a non-negative even integer, got {order}")
    if l_max < 0 or pilot_power < 0:
        raise ParameterError("l_max and pilot_power must be non-negative")
    qb = guard_size(grid, order, l_max)
    if not 3 * qb + 2 < grid.n_subcarriers:
        raise FrameTooSmallError(f"3*Q_B+2 = {3 * qb + 2} < N = {grid.n_subcarriers}")
    amplitude = complex(np.sqrt(pilot_power))
    frame = PilotFrame(n=grid.n_subcarriers, q_guard=qb, order=order, pilot_values=(amplitude, amplitude))
    logger.debug("pilot frame: Q_B=%d, pilots at %s, %d data slots", qb, frame.pilot_positions, frame.num_data)
    return frame


@dataclass(frozen=True)
class FrameSignal:
    """A DAFT-domain symbol split into its pilot and data parts, x = x_p + x_d."""

    pilot: np.ndarray
    data: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.pilot + self.data


def embed(frame: PilotFrame, data_symbols: np.ndarray) -> FrameSignal:
    """
    Place data symbols on the data indices alongside the pilots.

    :raises DimensionError: If the number of symbols differs from the number of data slots
    """
    data_symbols = np.asarray(data_symbols, dtype=complex).reshape(-1)
    if data_symbols.size != frame.num_data:
        raise DimensionError(f"frame has {frame.num_data} data slots, got {data_symbols.size} symbols")
    x_d = np.zeros(frame.n, dtype=complex)
    x_d[frame.data_indices] = data_symbols
    return FrameSignal(pilot=frame.pilot_vector(), data=x_d)


def extract_observation(frame: PilotFrame, y: np.ndarray) -> np.ndarray:
    """y_p = T_p y, the received samples in the observation window."""
    y = require_vector(y, frame.n, "received vector")
    return y[frame.obs_indices]
