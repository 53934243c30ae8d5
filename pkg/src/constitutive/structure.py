"""Randomized verifier of coercivity, growth and strong monotonicity."""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from pydantic import BaseModel

from src.errors import InvalidArgument
from src.tasks.pool import run_ordered

logger = logging.getLogger(__name__)

ApplyFn = Callable[[np.ndarray], np.ndarray]

MAGNITUDE_RANGE = (-6.0, 3.0)  # log10 of the sampled |u|
CHUNK = 4096


class StructureReport(BaseModel):
    law: str
    p: float
    sample_count: int
    seed: int
    coercivity_min: float
    growth_max: float
    monotonicity_min: float
    monotonicity_form: str
    coercivity_ok: bool
    growth_ok: bool
    monotonicity_ok: bool

    @property
    def passed(self) -> bool:
        return self.coercivity_ok and self.growth_ok and self.monotonicity_ok


def _sample(rng: np.random.Generator, n: int) -> np.ndarray:
    directions = rng.standard_normal((n, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    magnitudes = 10.0 ** rng.uniform(*MAGNITUDE_RANGE, size=n)
    return directions * magnitudes[:, None]


def _chunk_ratios(apply: ApplyFn, p: float, seed: int, index: int, n: int) -> tuple[float, float, float]:
    rng = np.random.default_rng([seed, index])
    u = _sample(rng, n)
    v = _sample(rng, n)
    au, av = apply(u), apply(v)
    nu_, nv_ = np.linalg.norm(u, axis=1), np.linalg.norm(v, axis=1)
    diff = np.linalg.norm(u - v, axis=1)

    coercivity = np.sum(au * u, axis=1) / nu_**p
    growth = np.linalg.norm(au, axis=1) / nu_ ** (p - 1.0)
    pairing = np.sum((au - av) * (u - v), axis=1)
    if p >= 2:
        scale = diff**p
    else:
        scale = (nu_ + nv_) ** (p - 2.0) * diff**2
    keep = scale > 0
    monotonicity = pairing[keep] / scale[keep]
    return (
        float(np.min(coercivity)),
        float(np.max(growth)),
        float(np.min(monotonicity)) if monotonicity.size else math.inf,
    )


def verify_structure(
    apply: ApplyFn,
    p: float,
    sample_count: int,
    seed: int,
    *,
    law: str = "custom",
    concurrency: int = 1,
) -> StructureReport:
    """Sample pairs (u, v) and record the worst empirical constants.

    Samples are drawn in chunks whose generators are keyed by (seed, chunk),
    so the report does not depend on ``concurrency``.
    """
    if not p > 1:
        raise InvalidArgument(f"p must exceed 1, got {p}")
    if sample_count < 1:
        raise InvalidArgument("sample_count must be at least 1")

    sizes = [min(CHUNK, sample_count - start) for start in range(0, sample_count, CHUNK)]
    jobs = [
        (lambda i=i, n=n: _chunk_ratios(apply, p, seed, i, n)) for i, n in enumerate(sizes)
    ]
    outcomes = run_ordered(jobs, concurrency=concurrency)
    for outcome in outcomes:
        if isinstance(outcome, BaseException):
            raise outcome

    coercivity = min(o[0] for o in outcomes)
    growth = max(o[1] for o in outcomes)
    monotonicity = min(o[2] for o in outcomes)
    report = StructureReport(
        law=law,
        p=p,
        sample_count=sample_count,
        seed=seed,
        coercivity_min=coercivity,
        growth_max=growth,
        monotonicity_min=monotonicity,
        monotonicity_form="|u-v|^p" if p >= 2 else "(|u|+|v|)^(p-2)|u-v|^2",
        coercivity_ok=bool(math.isfinite(coercivity) and coercivity > 0),
        growth_ok=bool(math.isfinite(growth)),
        monotonicity_ok=bool(math.isfinite(monotonicity) and monotonicity > 0),
    )
    logger.info(
        "Structure check %s p=%s: coercivity %.4g, growth %.4g, monotonicity %.4g",
        law, p, coercivity, growth, monotonicity,
    )
    return report
