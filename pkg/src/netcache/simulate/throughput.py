from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..trace import Outcome

GIGABIT = 1.25e8  # bytes per second


@dataclass(frozen=True)
class ThroughputModelSpec:
    """Saturating-ramp transfer model.

    Rates are bytes/second and ``ramp_bytes`` is in bytes, all in the same
    (possibly scaled) units as file sizes. A transfer of ``size`` bytes runs
    at ``r_max * size / (size + ramp_bytes)`` times lognormal jitter.
    """

    wan_max_bps: float = 10 * GIGABIT
    lan_max_bps: float = 40 * GIGABIT
    ramp_bytes: float = 1e9
    jitter_lognorm_sigma: float = 0.5

    @classmethod
    def scaled(cls, size_scale: float, **overrides) -> "ThroughputModelSpec":
        base = cls(**overrides)
        return cls(
            wan_max_bps=base.wan_max_bps * size_scale,
            lan_max_bps=base.lan_max_bps * size_scale,
            ramp_bytes=base.ramp_bytes * size_scale,
            jitter_lognorm_sigma=base.jitter_lognorm_sigma,
        )

    def problems(self) -> list[str]:
        out = []
        for name in ("wan_max_bps", "lan_max_bps", "ramp_bytes"):
            if not getattr(self, name) > 0:
                out.append(f"throughput_model.{name} must be > 0")
        if self.jitter_lognorm_sigma < 0:
            out.append("throughput_model.jitter_lognorm_sigma must be >= 0")
        if self.lan_max_bps < self.wan_max_bps:
            out.append("throughput_model.lan_max_bps must be >= wan_max_bps")
        return out


def model_transfer_seconds(
    size_bytes: int, outcome: Outcome, model: ThroughputModelSpec, rng: np.random.Generator
) -> float:
    """Transfer duration for one request; consumes exactly one normal draw."""
    if size_bytes < 1:
        raise ValueError("size_bytes must be >= 1")
    r_max = model.lan_max_bps if outcome is Outcome.HIT else model.wan_max_bps
    jitter = float(np.exp(model.jitter_lognorm_sigma * rng.standard_normal()))
    rate = r_max * size_bytes / (size_bytes + model.ramp_bytes) * jitter
    return size_bytes / rate
