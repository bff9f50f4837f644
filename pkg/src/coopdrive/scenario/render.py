"""Flat-shaded raster views of a scene.

Vehicle view: forward ego-centric projection with painter's-order occlusion
and a speed bar along the bottom whose length is the only place the exact
ego speed appears. Infra view: top-down wide window that also draws the
ground-truth route arc, the only place the realized turn geometry appears.
"""

from __future__ import annotations

import numpy as np

from .core import FRUSTUM_DEPTH, FRUSTUM_HALF_WIDTH, Scene, ground_truth

VIEW_H = 64
VIEW_W = 96

SKY = (38, 42, 60)
GROUND = (28, 28, 28)
ROAD = (66, 66, 66)
AGENT = (70, 130, 220)
EGO = (230, 60, 50)
ARC = (40, 250, 60)
ARC_END = (255, 240, 40)
BAR = (250, 250, 250)


def _fill(img, r0, r1, c0, c1, color) -> None:
    r0, r1 = max(0, r0), min(img.shape[0], r1)
    c0, c1 = max(0, c0), min(img.shape[1], c1)
    if r0 < r1 and c0 < c1:
        img[r0:r1, c0:c1] = color


def _disc(img, r, c, rad, color) -> None:
    r0, r1 = max(0, r - rad), min(img.shape[0], r + rad + 1)
    c0, c1 = max(0, c - rad), min(img.shape[1], c + rad + 1)
    if r0 >= r1 or c0 >= c1:
        return
    rr, cc = np.ogrid[r0:r1, c0:c1]
    img[r0:r1, c0:c1][(rr - r) ** 2 + (cc - c) ** 2 <= rad * rad] = color


def render_vehicle_view(scene: Scene) -> np.ndarray:
    img = np.zeros((VIEW_H, VIEW_W, 3), dtype=np.uint8)
    horizon = VIEW_H // 3
    img[:horizon] = SKY
    img[horizon:] = GROUND

    def project(dx: float, dy: float):
        # depth to row (far up), lateral to column, shrinking with depth
        t = min(max(dx / FRUSTUM_DEPTH, 0.0), 1.0)
        row = int(round(VIEW_H - 6 - t * (VIEW_H - 6 - horizon)))
        spread = (VIEW_W / 2) * (1.0 - 0.65 * t)
        col = int(round(VIEW_W / 2 + dy / FRUSTUM_HALF_WIDTH * spread / 2))
        return row, col, t

    # road wedge
    for r in range(horizon, VIEW_H):
        t = (VIEW_H - 6 - r) / (VIEW_H - 6 - horizon)
        half = int(round(10 + (1.0 - max(t, 0.0)) * 22))
        _fill(img, r, r + 1, VIEW_W // 2 - half, VIEW_W // 2 + half, ROAD)

    # far agents first so near ones paint over them (occlusion)
    visible = [a for a in scene.agents
               if 0.0 < a.pos[0] - scene.ego_pos[0] <= FRUSTUM_DEPTH
               and abs(a.pos[1] - scene.ego_pos[1]) <= FRUSTUM_HALF_WIDTH]
    for a in sorted(visible, key=lambda a: -(a.pos[0] - scene.ego_pos[0])):
        dx = a.pos[0] - scene.ego_pos[0]
        dy = a.pos[1] - scene.ego_pos[1]
        row, col, t = project(dx, dy)
        half = max(2, int(round(a.radius * 8 * (1.0 - 0.8 * t))))
        _fill(img, row - 2 * half, row, col - half, col + half, AGENT)

    # hood strip
    _fill(img, VIEW_H - 8, VIEW_H - 5, VIEW_W // 2 - 18, VIEW_W // 2 + 18, EGO)

    # speed bar: length is an affine map of the exact speed
    span = (scene.ego_speed - 2.0) / 3.0
    length = int(round(8 + span * (VIEW_W - 16)))
    _fill(img, VIEW_H - 4, VIEW_H, 2, 2 + length, BAR)
    return img


def render_infra_view(scene: Scene) -> np.ndarray:
    """Top-down window: x in [ego-12, ego+36], y in [ego-16, ego+16], 0.5 m/px."""
    img = np.zeros((VIEW_H, VIEW_W, 3), dtype=np.uint8)
    img[:] = GROUND
    ex, ey = scene.ego_pos

    def to_px(x: float, y: float):
        col = int(round((x - (ex - 12.0)) * 2.0))
        row = int(round((y - (ey - 16.0)) * 2.0))
        return row, col

    # crossroad bands
    r0, _ = to_px(ex, ey - 4.0)
    r1, _ = to_px(ex, ey + 4.0)
    _fill(img, r0, r1, 0, VIEW_W, ROAD)
    _, c0 = to_px(ex + 6.0, ey)
    _, c1 = to_px(ex + 14.0, ey)
    _fill(img, 0, VIEW_H, c0, c1, ROAD)

    for a in scene.agents:
        row, col = to_px(a.pos[0], a.pos[1])
        _disc(img, row, col, max(1, int(round(a.radius * 2))), AGENT)

    # route arc: a thin connecting ribbon plus one disc per waypoint whose
    # red channel ramps with the step index, so each future position is
    # individually identifiable (rasterized-map style timestep coloring)
    tau = ground_truth(scene)
    pts = [np.asarray(scene.ego_pos, dtype=float)] + [tau[i] for i in range(len(tau))]
    for a, b in zip(pts[:-1], pts[1:]):
        for s in np.linspace(0.0, 1.0, 6):
            p = a + s * (b - a)
            row, col = to_px(p[0], p[1])
            _fill(img, row, row + 2, col, col + 2, ARC)
    for k in range(len(tau)):
        row, col = to_px(tau[k, 0], tau[k, 1])
        ramp = (30 + 25 * (k + 1), 250, 60)
        _disc(img, row, col, 2, ramp)
    row, col = to_px(tau[-1, 0], tau[-1, 1])
    _fill(img, row - 1, row + 3, col - 1, col + 3, ARC_END)

    row, col = to_px(ex, ey)
    _fill(img, row - 2, row + 3, col - 2, col + 3, EGO)
    return img


def blank_view() -> np.ndarray:
    """Zero-information stand-in used when no roadside bytes are transmitted."""
    return np.zeros((VIEW_H, VIEW_W, 3), dtype=np.uint8)
