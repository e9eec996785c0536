"""Privacy-budget accounting for noisy gradient descent.

The chain is explicit and conservative:

1. calibration — a Gaussian mechanism with noise multiplier sigma is
   (eps, delta)-private per step at the lot level, with
   ``sigma = sqrt(2 ln(1.25/delta)) / eps``; the closed form is only valid
   for eps < 1, and anything outside that regime is an error, never a
   silently reported number;
2. amplification by subsampling — a step run on a q-subsample of the data is
   (ln(1 + q(e^eps - 1)), q*delta)-private with respect to the full dataset;
3. composition over steps — either plain addition or the advanced
   (Dwork-Rothblum-Vadhan) bound
   ``sqrt(2 T ln(1/delta')) * eps + T * eps * (e^eps - 1)`` with
   ``T*delta + delta'`` on the delta side; a ledger total reports whichever
   is smaller.

The per-event backend is pluggable (see :func:`ledger_total`) so a tighter
accountant can be dropped in without touching callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable


class OutOfRegimeError(ValueError):
    """A per-step epsilon fell outside the eps < 1 validity regime of the
    Gaussian-mechanism calibration."""


@dataclass(frozen=True)
class EpsDelta:
    """An (epsilon, delta) differential-privacy guarantee."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class GaussianMechanism:
    """Additive Gaussian noise N(0, (sensitivity * noise_scale)^2) on a
    function of the stated L2 sensitivity."""

    sensitivity: float
    noise_scale: float

    def __post_init__(self):
        if self.sensitivity <= 0:
            raise ValueError(f"sensitivity must be positive, got {self.sensitivity}")
        if self.noise_scale <= 0:
            raise ValueError(f"noise scale must be positive, got {self.noise_scale}")

    @property
    def noise_std(self) -> float:
        return self.sensitivity * self.noise_scale

    def privacy_cost(self, delta: float) -> EpsDelta:
        return EpsDelta(eps_for_sigma(self.noise_scale, delta), delta)


def sigma_for_eps(eps: float, delta: float) -> float:
    """Noise multiplier making one Gaussian-mechanism release
    (eps, delta)-private: sqrt(2 ln(1.25/delta)) / eps.  Valid for eps < 1."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if not 0.0 < eps < 1.0:
        raise OutOfRegimeError(
            f"calibration is only valid for 0 < eps < 1, got eps={eps}"
        )
    return math.sqrt(2.0 * math.log(1.25 / delta)) / eps


def eps_for_sigma(sigma: float, delta: float) -> float:
    """Per-release epsilon of a Gaussian mechanism with noise multiplier
    ``sigma``: sqrt(2 ln(1.25/delta)) / sigma.  Raises
    :class:`OutOfRegimeError` when the result is >= 1 (the closed form says
    nothing there)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    eps = math.sqrt(2.0 * math.log(1.25 / delta)) / sigma
    if eps >= 1.0:
        raise OutOfRegimeError(
            f"eps={eps:.4g} >= 1 for sigma={sigma}, delta={delta}; "
            "the calibration is out of its validity regime"
        )
    return eps


def amplify(step: EpsDelta, q: float) -> EpsDelta:
    """Privacy of a step applied to a q-subsample, w.r.t. the full dataset:
    (ln(1 + q(e^eps - 1)), q*delta)."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"sampling ratio must be in (0, 1], got {q}")
    if step.epsilon > 1.0:
        raise ValueError(
            f"amplification requires a per-step eps <= 1, got {step.epsilon}"
        )
    return EpsDelta(math.log1p(q * math.expm1(step.epsilon)), q * step.delta)


def compose_sequential(steps: Iterable[EpsDelta]) -> EpsDelta:
    """Plain sequential composition: epsilons and deltas add."""
    eps = 0.0
    delta = 0.0
    for step in steps:
        eps += step.epsilon
        delta += step.delta
    return EpsDelta(eps, delta)


def compose_strong(
    eps_step: float, delta_step: float, steps: int, delta_slack: float
) -> EpsDelta:
    """Advanced composition over ``steps`` identical (eps, delta) releases:
    eps_total = sqrt(2 T ln(1/delta')) * eps + T * eps * (e^eps - 1),
    delta_total = T * delta + delta'."""
    if steps < 1:
        raise ValueError(f"step count must be >= 1, got {steps}")
    if not 0.0 < delta_slack < 1.0:
        raise ValueError(f"delta slack must be in (0, 1), got {delta_slack}")
    eps_total = (
        math.sqrt(2.0 * steps * math.log(1.0 / delta_slack)) * eps_step
        + steps * eps_step * math.expm1(eps_step)
    )
    return EpsDelta(eps_total, steps * delta_step + delta_slack)


@dataclass(frozen=True)
class LedgerEvent:
    """One homogeneous block of training steps."""

    sigma: float
    q: float
    steps: int

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must be in (0, 1], got {self.q}")
        if self.steps < 1:
            raise ValueError(f"step count must be >= 1, got {self.steps}")


@dataclass
class PrivacyLedger:
    """Sequence of (sigma, q, steps) events plus the target delta used for
    per-step calibration and slack."""

    target_delta: float
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.target_delta < 1.0:
            raise ValueError(f"target delta must be in (0, 1), got {self.target_delta}")

    def record(self, sigma: float, q: float, steps: int) -> None:
        self.events.append(LedgerEvent(sigma, q, steps))


# An accountant backend maps one event to its total cost.
AccountantBackend = Callable[[float, float, int, float], EpsDelta]


def strong_composition_accountant(
    sigma: float, q: float, steps: int, delta: float
) -> EpsDelta:
    """Default backend: calibrate, amplify, then the cheaper of advanced and
    plain composition over the steps."""
    per_step = amplify(EpsDelta(eps_for_sigma(sigma, delta), delta), q)
    strong = compose_strong(per_step.epsilon, per_step.delta, steps, delta)
    sequential = EpsDelta(steps * per_step.epsilon, steps * per_step.delta)
    return strong if strong.epsilon <= sequential.epsilon else sequential


def amplified_step(sigma: float, q: float, delta: float) -> EpsDelta:
    """Per-step cost with respect to the full dataset (calibrate + amplify)."""
    return amplify(EpsDelta(eps_for_sigma(sigma, delta), delta), q)


def ledger_total(
    ledger: PrivacyLedger, backend: AccountantBackend = strong_composition_accountant
) -> EpsDelta:
    """Total (eps, delta) of every event in the ledger, heterogeneous events
    sequentially composed.  An out-of-regime event is reported by index."""
    totals = []
    for i, event in enumerate(ledger.events):
        try:
            totals.append(backend(event.sigma, event.q, event.steps, ledger.target_delta))
        except OutOfRegimeError as exc:
            raise OutOfRegimeError(f"ledger event {i} ({event}): {exc}") from exc
    return compose_sequential(totals)
