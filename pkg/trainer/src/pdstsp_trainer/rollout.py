"""Policy rollouts on top of the solver's decode MDP and masking rules."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from pdstsp.core import Instance
from pdstsp.search import advance, compute_mask, initial_state

from .model import PolicyNet

MASK_TRAIN = "train_lb"
MASK_INFERENCE = "inference_2opt"


def select_start_pickups(policy: PolicyNet, inst: Instance, embeddings, graph,
                         M: int, mask_mode: str = MASK_TRAIN) -> List[int]:
    """Top-M admissible first pickups ranked by first-step policy probability."""
    state = initial_state(inst)
    mask = compute_mask(state, inst, mask_mode)
    allowed = torch.as_tensor(mask.allowed)[None]
    if not allowed.any():
        return []
    with torch.no_grad():
        probs = policy.decode_step(
            embeddings, graph,
            last_idx=torch.zeros(1, dtype=torch.long),
            cap_frac=torch.ones(1),
            remaining=torch.full((1,), float(inst.max_length)),
            mask=allowed,
        )[0]
    cands = [p for p in range(1, inst.n + 1) if mask.allowed[p]]
    cands.sort(key=lambda p: (-float(probs[p]), p))
    return cands[:M]


def rollout_batch(
    policy: PolicyNet,
    inst: Instance,
    embeddings,
    graph,
    starts: Sequence[Optional[int]],
    mask_mode: str = MASK_TRAIN,
    sample: bool = True,
    generator: Optional[torch.Generator] = None,
) -> List[Tuple[tuple, torch.Tensor]]:
    """Roll out one trajectory per start in lockstep over a shared encoding.

    A start of None means the first action is chosen by the policy too.
    Returns (vertex sequence, summed log-probability) per trajectory; forced
    first steps contribute no log-probability.
    """
    states = [initial_state(inst) for _ in starts]
    logps: List[torch.Tensor] = [torch.zeros(()) for _ in starts]
    forced = list(starts)
    while True:
        active = [i for i, s in enumerate(states) if not s.done(inst)]
        if not active:
            break
        masks = [compute_mask(states[i], inst, mask_mode) for i in active]
        allowed = torch.as_tensor(
            np.stack([m.allowed for m in masks]), dtype=torch.bool
        )
        probs = policy.decode_step(
            embeddings, graph,
            last_idx=torch.tensor([states[i].current for i in active]),
            cap_frac=torch.tensor([states[i].cap_frac for i in active],
                                  dtype=torch.float32),
            remaining=torch.tensor([states[i].remaining for i in active],
                                   dtype=torch.float32),
            mask=allowed,
        )
        if sample:
            choices = torch.multinomial(probs.detach(), 1, generator=generator)
            choices = choices.squeeze(1)
        else:
            choices = probs.detach().argmax(dim=1)
        for row, i in enumerate(active):
            if forced[i] is not None:
                v = forced[i]
                if not allowed[row, v]:
                    raise ValueError(f"forced start {v} is masked")
                forced[i] = None
            else:
                v = int(choices[row])
                logps[i] = logps[i] + torch.log(probs[row, v])
            states[i] = advance(inst, states[i], v,
                                witness=masks[row].witnesses.get(v, ()))
    return [(s.seq, lp) for s, lp in zip(states, logps)]


def greedy_rollouts(policy: PolicyNet, inst: Instance, M: int,
                    mask_mode: str = MASK_INFERENCE) -> List[tuple]:
    """M greedy trajectories from the policy's top-M first pickups."""
    with torch.no_grad():
        embeddings, graph = policy.encode(inst)
        starts = select_start_pickups(policy, inst, embeddings, graph, M,
                                      mask_mode)
        if not starts:
            starts = [None]
        out = rollout_batch(policy, inst, embeddings, graph, starts,
                            mask_mode=mask_mode, sample=False)
    return [seq for seq, _ in out]
