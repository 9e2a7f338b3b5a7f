"""Flow colour coding with the Middlebury colour wheel."""
from __future__ import annotations

import numpy as np

# hue transitions red-yellow, yellow-green, green-cyan, cyan-blue, blue-magenta, magenta-red
_SEGMENTS = (15, 6, 4, 11, 13, 6)


def color_wheel() -> np.ndarray:
    """The 55-entry wheel as float RGB in [0, 1]."""
    ry, yg, gc, cb, bm, mr = _SEGMENTS
    cols = []
    # 8-bit ramps truncated as in the reference tables
    ramp = lambda n: np.floor(255 * np.arange(n) / n) / 255  # noqa: E731
    cols.append(np.stack([np.ones(ry), ramp(ry), np.zeros(ry)], -1))
    cols.append(np.stack([1 - ramp(yg), np.ones(yg), np.zeros(yg)], -1))
    cols.append(np.stack([np.zeros(gc), np.ones(gc), ramp(gc)], -1))
    cols.append(np.stack([np.zeros(cb), 1 - ramp(cb), np.ones(cb)], -1))
    cols.append(np.stack([ramp(bm), np.zeros(bm), np.ones(bm)], -1))
    cols.append(np.stack([np.ones(mr), np.zeros(mr), 1 - ramp(mr)], -1))
    return np.concatenate(cols)


def flow_to_color(flow, max_norm: float | None = None) -> np.ndarray:
    """Render a flow field as an RGB image in [0, 1].

    Direction selects the hue, magnitude divided by ``max_norm`` (default:
    the largest magnitude in the field) the saturation. Zero flow is white;
    unknown or non-finite vectors are black.
    """
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    bad = ~np.isfinite(u) | ~np.isfinite(v) | (np.abs(u) > 1e9) | (np.abs(v) > 1e9)
    u = np.where(bad, 0.0, u)
    v = np.where(bad, 0.0, v)
    rad = np.hypot(u, v)
    if max_norm is None:
        max_norm = float(rad.max())
    if max_norm <= 0:
        max_norm = 1.0
    u, v, rad = u / max_norm, v / max_norm, rad / max_norm
    wheel = color_wheel()
    n = len(wheel)
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1) / 2 * (n - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % n
    f = (fk - k0)[..., None]
    col = (1 - f) * wheel[k0] + f * wheel[k1]
    r = np.minimum(rad, 1.0)[..., None]
    inside = (rad <= 1)[..., None]
    col = np.where(inside, 1 - r * (1 - col), col * 0.75)
    return np.where(bad[..., None], 0.0, col)
