"""
Observation normalization - fixed affine map shared by every client

Feature order: temperature, humidity, soc, net consumption, price, hour.
"""

import numpy as np

OBS_OFFSET = np.array([25.0, 0.5, 0.0, 0.0, 0.0, 0.0])
OBS_SCALE = np.array([15.0, 0.3, 1.0, 10.0, 0.4, 23.0])


def normalize(observation: np.ndarray) -> np.ndarray:
    return (np.asarray(observation, dtype=np.float64) - OBS_OFFSET) / OBS_SCALE


def denormalize(features: np.ndarray) -> np.ndarray:
    return np.asarray(features, dtype=np.float64) * OBS_SCALE + OBS_OFFSET
