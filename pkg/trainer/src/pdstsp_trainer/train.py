"""REINFORCE training loops: multi-start shared-mean baseline and greedy
rollout baseline with a paired t-test refresh rule."""

from __future__ import annotations

import copy
import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy import stats

from pdstsp.core import Instance, make_route, shaped_objective, validate_route
from pdstsp.generator import GenSpec, gen_instance
from pdstsp.search import advance, compute_mask, initial_state

from .model import NeuralConfig, PolicyNet
from .rollout import (
    MASK_INFERENCE,
    MASK_TRAIN,
    greedy_rollouts,
    rollout_batch,
    select_start_pickups,
)


def route_objective(inst: Instance, seq: Sequence[int], rho: float) -> float:
    """Shaped objective of a decoded sequence: -revenue + rho * overage."""
    return shaped_objective(inst, make_route(inst, seq), rho)


def advantages_from_objectives(objectives: torch.Tensor) -> torch.Tensor:
    """Center objectives on their mean; the shared per-instance baseline."""
    return objectives - objectives.mean()


def instance_loss(policy: PolicyNet, inst: Instance, cfg: NeuralConfig,
                  generator: Optional[torch.Generator] = None,
                  sample: bool = True) -> Tuple[torch.Tensor, Dict]:
    """REINFORCE surrogate for one instance with M rollouts and a shared
    mean baseline. Returns (loss, stats)."""
    embeddings, graph = policy.encode(inst)
    starts = select_start_pickups(policy, inst, embeddings, graph, cfg.M,
                                  MASK_TRAIN)
    if not starts:
        starts = [None]
    out = rollout_batch(policy, inst, embeddings, graph, starts,
                        mask_mode=MASK_TRAIN, sample=sample,
                        generator=generator)
    objectives = torch.tensor(
        [route_objective(inst, seq, cfg.rho) for seq, _ in out],
        dtype=torch.float64,
    )
    adv = advantages_from_objectives(objectives)
    logps = torch.stack([lp for _, lp in out])
    loss = (adv.detach().to(logps.dtype) * logps).mean()
    return loss, {
        "objectives": objectives,
        "advantages": adv,
        "adv_sum": float(adv.sum()),
        "mean_objective": float(objectives.mean()),
    }


def pomo_step(policy: PolicyNet, optimizer: torch.optim.Optimizer,
              instances: Sequence[Instance], cfg: NeuralConfig,
              generator: Optional[torch.Generator] = None) -> Dict:
    """One gradient step over a batch of instances."""
    optimizer.zero_grad()
    losses = []
    stats_all = []
    for inst in instances:
        loss, st = instance_loss(policy, inst, cfg, generator)
        losses.append(loss)
        stats_all.append(st)
    total = torch.stack(losses).mean()
    total.backward()
    optimizer.step()
    return {
        "loss": float(total.detach()),
        "mean_objective": float(np.mean([s["mean_objective"] for s in stats_all])),
        "adv_sums": [s["adv_sum"] for s in stats_all],
    }


def make_instances(n: int, count: int, seed: int,
                   revenue: str = "distance") -> List[Instance]:
    spec = GenSpec(n=n, revenue_setting=revenue, seed=seed, count=count)
    return [gen_instance(spec, i) for i in range(count)]


def greedy_eval(policy: PolicyNet, instances: Sequence[Instance],
                M: int) -> float:
    """Mean best-of-M greedy rollout revenue under inference masking."""
    policy.eval()
    revenues = []
    for inst in instances:
        best = 0.0
        for seq in greedy_rollouts(policy, inst, M, MASK_INFERENCE):
            res = validate_route(inst, seq)
            if res.feasible:
                best = max(best, res.revenue)
        revenues.append(best)
    policy.train()
    return float(np.mean(revenues))


def pomo_train(cfg: NeuralConfig, n: int, steps: int, seed: int = 0,
               log_every: int = 0) -> Tuple[PolicyNet, List[Dict]]:
    """Train a fresh policy with multi-start REINFORCE on generated batches."""
    torch.manual_seed(seed)
    policy = PolicyNet(cfg)
    optimizer = torch.optim.Adam(policy.parameters(), lr=cfg.lr,
                                 weight_decay=cfg.weight_decay)
    generator = torch.Generator().manual_seed(seed)
    history = []
    for step in range(steps):
        instances = make_instances(n, cfg.batch_size,
                                   seed=seed * 1_000_003 + step + 1)
        st = pomo_step(policy, optimizer, instances, cfg, generator)
        st["step"] = step
        if log_every and step % log_every == 0:
            history.append(st)
        elif not log_every:
            history.append(st)
    return policy, history


def baseline_should_update(candidate_obj: Sequence[float],
                           baseline_obj: Sequence[float],
                           alpha: float = 0.05) -> bool:
    """One-sided paired t-test: adopt the candidate only when its shaped
    objectives are significantly lower than the frozen baseline's."""
    cand = np.asarray(candidate_obj, dtype=float)
    base = np.asarray(baseline_obj, dtype=float)
    diffs = cand - base
    if np.allclose(diffs, 0.0):
        return False
    res = stats.ttest_rel(cand, base, alternative="less")
    return bool(res.pvalue < alpha)


def _greedy_objective(policy: PolicyNet, inst: Instance, rho: float) -> float:
    seq = greedy_rollouts(policy, inst, 1, MASK_TRAIN)[0]
    return route_objective(inst, seq, rho)


def am_train(cfg: NeuralConfig, n: int, steps: int, seed: int = 0,
             eval_size: int = 16, alpha: float = 0.05
             ) -> Tuple[PolicyNet, List[Dict]]:
    """REINFORCE with a frozen greedy-rollout baseline policy, refreshed when
    a one-sided paired t-test on held-out objectives rejects at alpha."""
    torch.manual_seed(seed)
    policy = PolicyNet(cfg)
    baseline = copy.deepcopy(policy)
    baseline.eval()
    optimizer = torch.optim.Adam(policy.parameters(), lr=cfg.lr,
                                 weight_decay=cfg.weight_decay)
    generator = torch.Generator().manual_seed(seed)
    eval_batch = make_instances(n, eval_size, seed=seed * 7_000_003 + 5)
    history = []
    for step in range(steps):
        instances = make_instances(n, cfg.batch_size,
                                   seed=seed * 1_000_003 + step + 1)
        optimizer.zero_grad()
        losses = []
        objs = []
        for inst in instances:
            embeddings, graph = policy.encode(inst)
            out = rollout_batch(policy, inst, embeddings, graph, [None],
                                mask_mode=MASK_TRAIN, sample=True,
                                generator=generator)
            seq, logp = out[0]
            obj = route_objective(inst, seq, cfg.rho)
            base = _greedy_objective(baseline, inst, cfg.rho)
            losses.append((obj - base) * logp)
            objs.append(obj)
        total = torch.stack(losses).mean()
        total.backward()
        optimizer.step()
        refreshed = False
        if (step + 1) % 10 == 0:
            cand = [_greedy_objective(policy, inst, cfg.rho)
                    for inst in eval_batch]
            base = [_greedy_objective(baseline, inst, cfg.rho)
                    for inst in eval_batch]
            if baseline_should_update(cand, base, alpha):
                baseline = copy.deepcopy(policy)
                baseline.eval()
                refreshed = True
        history.append({"step": step, "loss": float(total.detach()),
                        "mean_objective": float(np.mean(objs)),
                        "baseline_refreshed": refreshed})
    return policy, history


def save_checkpoint(policy: PolicyNet, path) -> None:
    torch.save({"version": 1, "config": policy.cfg.__dict__,
                "state_dict": policy.state_dict()}, path)


def load_checkpoint(path) -> PolicyNet:
    payload = torch.load(path, weights_only=False)
    policy = PolicyNet(NeuralConfig(**payload["config"]))
    policy.load_state_dict(payload["state_dict"])
    policy.eval()
    return policy


def enumerate_policy_expectation(policy: PolicyNet, inst: Instance,
                                 rho: float) -> Tuple[torch.Tensor, torch.Tensor]:
    """Exact expected shaped objective over every trajectory of a tiny MDP,
    plus the REINFORCE surrogate sum(p.detach() * f * log p).

    Both share the same gradient in expectation, which makes the surrogate
    checkable against finite differences of the exact expectation.
    """
    embeddings, graph = policy.encode(inst)

    def expand(state, logp):
        if state.done(inst):
            f = route_objective(inst, state.seq, rho)
            return [(f, logp)]
        mask = compute_mask(state, inst, MASK_TRAIN)
        allowed = torch.as_tensor(mask.allowed)[None]
        probs = policy.decode_step(
            embeddings, graph,
            last_idx=torch.tensor([state.current]),
            cap_frac=torch.tensor([state.cap_frac], dtype=embeddings.dtype),
            remaining=torch.tensor([state.remaining], dtype=embeddings.dtype),
            mask=allowed,
        )[0]
        leaves = []
        for v in np.flatnonzero(mask.allowed):
            v = int(v)
            child = advance(inst, state, v,
                            witness=mask.witnesses.get(v, ()))
            leaves.extend(expand(child, logp + torch.log(probs[v])))
        return leaves

    zero = torch.zeros((), dtype=embeddings.dtype)
    leaves = expand(initial_state(inst), zero)
    expectation = sum(torch.exp(lp) * f for f, lp in leaves)
    surrogate = sum(torch.exp(lp).detach() * f * lp for f, lp in leaves)
    return expectation, surrogate
