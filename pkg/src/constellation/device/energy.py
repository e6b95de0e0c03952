"""Battery accounting for Metered devices and the fitted dynamic profile."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifest import DYNAMIC, STATIC


class EnergyExhausted(Exception):
    """The device cannot pay for the requested operation."""


@dataclass
class EnergyState:
    """Remaining charge plus either static per-op costs or a fitted model.

    The dynamic profile regresses observed depletion on one indicator per
    operation name plus the elapsed time since the previous event, and is
    refit whenever an observation arrives.
    """

    remaining: float
    profile_kind: str                      # Static | Dynamic
    static_costs: dict[str, float] = field(default_factory=dict)
    capacity: float = 0.0
    last_event_ms: int = 0
    exhausted: bool = False
    history: list[tuple[str, float, float]] = field(default_factory=list)
    _ops: list[str] = field(default_factory=list)
    _coeffs: np.ndarray | None = None

    def estimate(self, op: str, elapsed_ms: float) -> float:
        """Predicted depletion for one operation under the current model."""
        if self.profile_kind == STATIC:
            return self.static_costs.get(op, 0.0)
        if self._coeffs is None:
            observed = [cost for o, _, cost in self.history if o == op]
            return sum(observed) / len(observed) if observed else 0.0
        if op not in self._ops:
            return 0.0
        idx = self._ops.index(op)
        return float(self._coeffs[idx] + self._coeffs[-1] * elapsed_ms)

    def record_event(self, op: str, now_ms: int, observed: float | None = None) -> float:
        """Charge one operation; returns the depletion applied.

        Raises EnergyExhausted (and marks the device unavailable) when the
        cost exceeds the remaining charge; the charge is not decremented.
        """
        if self.exhausted:
            raise EnergyExhausted("device battery is exhausted")
        elapsed = float(max(0, now_ms - self.last_event_ms))
        if self.profile_kind == STATIC:
            cost = self.static_costs.get(op, 0.0)
        else:
            cost = observed if observed is not None else self.estimate(op, elapsed)
        if cost > self.remaining:
            self.exhausted = True
            raise EnergyExhausted(
                f"operation {op} costs {cost}, only {self.remaining} remaining"
            )
        self.remaining -= cost
        self.last_event_ms = now_ms
        if self.profile_kind == DYNAMIC and observed is not None:
            self.history.append((op, elapsed, float(observed)))
            self._refit()
        return cost

    def recharge(self, amount: float | None = None) -> None:
        """Restore charge; the only way `remaining` may increase."""
        if amount is None:
            self.remaining = self.capacity
        else:
            self.remaining = min(self.capacity, self.remaining + amount)
        if self.remaining > 0:
            self.exhausted = False

    def _refit(self) -> None:
        self._ops = sorted({op for op, _, _ in self.history})
        rows = len(self.history)
        cols = len(self._ops) + 1
        design = np.zeros((rows, cols))
        target = np.zeros(rows)
        for i, (op, elapsed, cost) in enumerate(self.history):
            design[i, self._ops.index(op)] = 1.0
            design[i, -1] = elapsed
            target[i] = cost
        self._coeffs = np.linalg.lstsq(design, target, rcond=None)[0]


def energy_state_from_manifest(manifest) -> EnergyState | None:
    if manifest.battery_capacity is None:
        return None
    return EnergyState(
        remaining=manifest.battery_capacity,
        profile_kind=manifest.profile_kind or DYNAMIC,
        static_costs=dict(manifest.static_costs),
        capacity=manifest.battery_capacity,
    )
