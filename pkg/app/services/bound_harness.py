"""
Randomized Bound Harness.

Draws Dirichlet(1) joints and channels with independent per-instance
seeds and runs every theorem and lemma check on each draw.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from app.models.bound_models import (
    BoundedLoss,
    BoundReport,
    Lemma1Instance,
    Lemma2Instance,
    Lemma3Instance,
    Lemma4Instance,
)
from app.models.enums import LossKind
from app.models.probability import Channel, FiniteJoint
from app.services.base_service import BaseService
from app.services.bounds import (
    verify_lemma,
    verify_theorem1,
    verify_theorem2,
    verify_theorem3,
    verify_theorem4,
)
from app.services.nn import effective_cap

__all__ = ["BoundHarnessService", "RandomInstance", "instance_seeds", "random_instance"]

# Cardinality ranges (inclusive) of the random instances.
X_RANGE = (2, 6)
Y_RANGE = (2, 4)
D_RANGE = (3, 4)
G_RANGE = (2, 3)

REPORTS_PER_INSTANCE: int = 10


class RandomInstance:
    """A random joint with its channel, loss and one input per lemma."""

    def __init__(self, rng: np.random.Generator) -> None:
        n_x = int(rng.integers(X_RANGE[0], X_RANGE[1] + 1))
        n_y = int(rng.integers(Y_RANGE[0], Y_RANGE[1] + 1))
        n_d = int(rng.integers(D_RANGE[0], D_RANGE[1] + 1))
        n_g = int(rng.integers(G_RANGE[0], G_RANGE[1] + 1))
        sizes = (n_x, n_y, n_d, n_g)

        probs = rng.dirichlet(np.ones(int(np.prod(sizes)))).reshape(sizes)
        target = int(rng.integers(0, n_d))
        sources = tuple(d for d in range(n_d) if d != target)
        self.joint = FiniteJoint(probs=probs, source_domains=sources, target_domain=target)
        self.channel = Channel(cond_probs=rng.dirichlet(np.ones(n_y), size=n_x))
        self.loss = BoundedLoss(cap=effective_cap(1.0, n_y), kind=LossKind.BOUNDED_CROSS_ENTROPY)

        n_cells = n_x * n_y
        self.lemma1 = Lemma1Instance(
            f=rng.uniform(0.0, self.loss.cap, size=n_cells),
            p=rng.dirichlet(np.ones(n_cells)),
            q=rng.dirichlet(np.ones(n_cells)),
            cap=self.loss.cap,
        )
        self.lemma2 = Lemma2Instance(joint=probs.sum(axis=(2, 3)))
        self.lemma3 = Lemma3Instance(
            p_j=rng.dirichlet(np.ones(n_x)),
            p_j_prime=rng.dirichlet(np.ones(n_x)),
            p_i=rng.dirichlet(np.ones(n_x)),
            p_i_prime=rng.dirichlet(np.ones(n_x)),
        )
        self.lemma4 = Lemma4Instance(joint=probs)

    def reports(
        self, seed: Optional[int] = None, chain_rule_tol: Optional[float] = None
    ) -> list[BoundReport]:
        """All ten checks: the four theorems (three chain-rule inequalities) and four lemmas."""
        return [
            verify_theorem1(self.joint, self.channel, self.loss, seed),
            verify_theorem2(self.joint, self.channel, seed),
            verify_theorem3(self.joint, self.channel, self.loss, seed),
            *verify_theorem4(self.joint, self.channel, seed, chain_rule_tol),
            verify_lemma(1, self.lemma1, seed),
            verify_lemma(2, self.lemma2, seed),
            verify_lemma(3, self.lemma3, seed),
            verify_lemma(4, self.lemma4, seed),
        ]


def random_instance(seed: int) -> RandomInstance:
    return RandomInstance(np.random.default_rng(seed))


def instance_seeds(n_instances: int, seed: int) -> list[int]:
    """Independent per-instance seeds spawned from one master seed."""
    words = np.random.SeedSequence(seed).generate_state(n_instances, dtype=np.uint32)
    return [int(w) for w in words]


class BoundHarnessService(BaseService):
    """Runs the bound checks over many random instances."""

    def run(self, n_instances: int, seed: int, threads: Optional[int] = None) -> list[BoundReport]:
        """Reports for *n_instances* random instances, in instance order."""
        workers = threads or self._config.FAIRDG_THREADS
        seeds = instance_seeds(n_instances, seed)
        chain_rule_tol = self._config.CHAIN_RULE_TOLERANCE

        def _one(instance_seed: int) -> list[BoundReport]:
            return random_instance(instance_seed).reports(instance_seed, chain_rule_tol)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = [r for batch in pool.map(_one, seeds) for r in batch]

        tolerance = self._config.BOUND_TOLERANCE
        violations = [r for r in reports if not r.holds(tolerance)]
        for report in violations:
            self._logger.warning(
                "Bound violated",
                extra={"bound": report.name, "slack": report.slack, "instance_seed": report.seed},
            )
        self._logger.info(
            "Bound harness finished",
            extra={
                "instances": n_instances,
                "reports": len(reports),
                "violations": len(violations),
                "chain_rule_failures": sum(
                    1 for r in reports if r.metadata.get("chain_rules_hold") is False
                ),
                "min_slack": min((r.slack for r in reports), default=0.0),
            },
        )
        return reports

    @staticmethod
    def min_slack_by_name(reports: list[BoundReport]) -> dict[str, float]:
        summary: dict[str, float] = {}
        for report in reports:
            summary[report.name] = min(summary.get(report.name, report.slack), report.slack)
        return summary
