"""Export greedy policy rollouts as seed trajectories for the solver."""

from __future__ import annotations

import json
import warnings
from typing import Sequence

from pdstsp.core import Instance, validate_route

from .model import PolicyNet
from .rollout import MASK_INFERENCE, greedy_rollouts


def trajectory_record(policy: PolicyNet, inst: Instance, instance_id: str,
                      M: int) -> dict:
    """One seed record: up to M greedy rollouts, each strictly validated.

    Infeasible rollouts are dropped with a warning; if everything is dropped
    the record falls back to the empty route so downstream consumers always
    get at least one seed.
    """
    routes = []
    for seq in greedy_rollouts(policy, inst, M, MASK_INFERENCE):
        if validate_route(inst, seq).feasible:
            routes.append(list(seq))
        else:
            warnings.warn(
                f"instance {instance_id}: dropped infeasible rollout {seq}")
    if not routes:
        routes = [[0, inst.end]]
    return {"instance_id": instance_id, "routes": routes}


def export_trajectories(policy: PolicyNet, instances: Sequence[Instance],
                        M: int, path) -> int:
    """Write one JSONL seed record per instance; ids are line indices.
    Returns the number of records written."""
    policy.eval()
    with open(path, "w") as fh:
        for i, inst in enumerate(instances):
            record = trajectory_record(policy, inst, str(i), M)
            fh.write(json.dumps(record) + "\n")
    return len(instances)
