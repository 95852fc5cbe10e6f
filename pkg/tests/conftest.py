import numpy as np
import pytest

from pdstsp.core import Instance


def build_instance(coords, demand, revenue, capacity=10, max_length=10.0):
    coords = np.asarray(coords, dtype=float)
    n = (len(coords) - 2) // 2
    return Instance(
        n=n,
        coords=coords,
        demand=np.asarray(demand, dtype=int),
        revenue=np.asarray(revenue, dtype=float),
        capacity=capacity,
        max_length=max_length,
    )


@pytest.fixture
def tiny_instance():
    # n=2: start (0,0), pickups on the bottom edge, deliveries above them
    return build_instance(
        coords=[
            [0.0, 0.0],  # 0 start
            [0.2, 0.0],  # 1 pickup
            [0.6, 0.0],  # 2 pickup
            [0.2, 0.3],  # 3 delivery of 1
            [0.6, 0.3],  # 4 delivery of 2
            [1.0, 0.0],  # 5 end
        ],
        demand=[2, 3],
        revenue=[0.5, 0.8],
        capacity=4,
        max_length=3.0,
    )
