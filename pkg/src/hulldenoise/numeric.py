"""Small numeric helpers shared across modules."""
import math

# ceilings within this relative distance of an integer snap to it
CEIL_SNAP = 1e-12


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def snap_ceil(x: float) -> int:
    """Ceiling that ignores floating-point noise just above an integer."""
    r = round(x)
    if abs(x - r) <= CEIL_SNAP * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)
