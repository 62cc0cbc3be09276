"""One-cycle learning rate policy with cyclical momentum.

One cycle = a linear ramp lr_min -> lr_max over step_size iterations and the
mirror ramp back down, followed by a final annihilation phase that decays
linearly to final_lr for the remaining iterations. Momentum moves against
the learning rate on the two ramps and is held at its high value during
annihilation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass


@dataclass(frozen=True)
class OneCycleConfig:
    total_iterations: int
    step_size: int
    lr_max: float = 0.00055
    lr_min: float | None = None  # defaults to lr_max / 10
    final_lr: float | None = None  # defaults to lr_min / 100
    momentum_high: float = 0.95
    momentum_low: float = 0.85

    def __post_init__(self):
        if self.lr_min is None:
            object.__setattr__(self, "lr_min", self.lr_max / 10.0)
        if self.final_lr is None:
            object.__setattr__(self, "final_lr", self.lr_min / 100.0)
        if not 0 < self.lr_min < self.lr_max:
            raise ValueError(f"need 0 < lr_min < lr_max, got {self.lr_min} / {self.lr_max}")
        if not 0 < self.final_lr <= self.lr_min:
            raise ValueError(f"final_lr must lie in (0, lr_min], got {self.final_lr}")
        if self.step_size < 1:
            raise ValueError(f"step_size must be >= 1, got {self.step_size}")
        if 2 * self.step_size >= self.total_iterations:
            raise ValueError(
                f"cycle of 2*{self.step_size} must be shorter than "
                f"{self.total_iterations} total iterations"
            )
        if not 0.0 <= self.momentum_low < self.momentum_high < 1.0:
            raise ValueError(
                f"need 0 <= momentum_low < momentum_high < 1, got "
                f"{self.momentum_low} / {self.momentum_high}"
            )


def for_total(total_iterations: int, step_frac: float = 0.4, **kwargs) -> OneCycleConfig:
    """Config whose step size is a fraction of the total iteration count."""
    step = max(1, int(step_frac * total_iterations))
    if 2 * step >= total_iterations:
        step = max(1, (total_iterations - 1) // 2)
    return OneCycleConfig(total_iterations=total_iterations, step_size=step, **kwargs)


def _check_t(cfg: OneCycleConfig, t: int) -> None:
    if not 0 <= t < cfg.total_iterations:
        raise ValueError(f"iteration {t} outside [0, {cfg.total_iterations})")


def _blend(a: float, b: float, frac: float) -> float:
    # two-coefficient form is exact at frac 0 and 1; clamp shaves the at most
    # one-ulp excursion interior rounding can produce
    v = a * (1.0 - frac) + b * frac
    return min(max(v, min(a, b)), max(a, b))


def lr_at(cfg: OneCycleConfig, t: int) -> float:
    """Learning rate at iteration t of the schedule."""
    _check_t(cfg, t)
    s = cfg.step_size
    if t <= s:
        return _blend(cfg.lr_min, cfg.lr_max, t / s)
    if t <= 2 * s:
        return _blend(cfg.lr_max, cfg.lr_min, (t - s) / s)
    last = cfg.total_iterations - 1
    if last == 2 * s:
        return cfg.lr_min
    return _blend(cfg.lr_min, cfg.final_lr, (t - 2 * s) / (last - 2 * s))


def momentum_at(cfg: OneCycleConfig, t: int) -> float:
    """Momentum at iteration t: mirrors the learning-rate ramps."""
    _check_t(cfg, t)
    s = cfg.step_size
    if t <= s:
        return _blend(cfg.momentum_high, cfg.momentum_low, t / s)
    if t <= 2 * s:
        return _blend(cfg.momentum_low, cfg.momentum_high, (t - s) / s)
    return cfg.momentum_high


def schedule_table(cfg: OneCycleConfig) -> list[tuple[int, float, float]]:
    return [(t, lr_at(cfg, t), momentum_at(cfg, t)) for t in range(cfg.total_iterations)]


def dump_csv(cfg: OneCycleConfig, metadata_line: str | None = None) -> str:
    """Render the full (t, lr, momentum) table as CSV text."""
    buf = io.StringIO()
    if metadata_line:
        buf.write(metadata_line.rstrip("\n") + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "lr", "momentum"])
    for t, lr, mom in schedule_table(cfg):
        writer.writerow([t, repr(lr), repr(mom)])
    return buf.getvalue()
