"""Small hand-written SVG charts: fitness curves and action traces."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH = 720
HEIGHT = 420
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _points(xs, ys) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))


class _Frame:
    """Maps data coordinates into one plotting rectangle."""

    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def x(self, v):
        lo, hi = self.xlim
        span = hi - lo or 1.0
        return self.x0 + (np.asarray(v, dtype=float) - lo) / span * self.w

    def y(self, v):
        lo, hi = self.ylim
        v = np.clip(np.asarray(v, dtype=float), lo, hi)
        return self.y0 + self.h - (v - lo) / (hi - lo) * self.h


def _axes(frame: _Frame, yticks, xlabel: str, ylabel: str | None) -> list[str]:
    out = [
        f'<rect x="{_fmt(frame.x0)}" y="{_fmt(frame.y0)}" width="{_fmt(frame.w)}" '
        f'height="{_fmt(frame.h)}" fill="none" stroke="#333"/>'
    ]
    for t in yticks:
        y = float(frame.y(t))
        out.append(f'<line x1="{_fmt(frame.x0 - 4)}" y1="{_fmt(y)}" x2="{_fmt(frame.x0)}" y2="{_fmt(y)}" stroke="#333"/>')
        out.append(
            f'<text x="{_fmt(frame.x0 - 6)}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">{_fmt(t)}</text>'
        )
    lo, hi = frame.xlim
    for t in np.unique(np.linspace(lo, hi, 6).round()):
        x = float(frame.x(t))
        yb = frame.y0 + frame.h
        out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(yb)}" x2="{_fmt(x)}" y2="{_fmt(yb + 4)}" stroke="#333"/>')
        out.append(f'<text x="{_fmt(x)}" y="{_fmt(yb + 16)}" text-anchor="middle" font-size="11">{int(t)}</text>')
    out.append(
        f'<text x="{_fmt(frame.x0 + frame.w / 2)}" y="{_fmt(frame.y0 + frame.h + 34)}" '
        f'text-anchor="middle" font-size="12">{escape(xlabel)}</text>'
    )
    if ylabel:
        cy = frame.y0 + frame.h / 2
        out.append(
            f'<text x="16" y="{_fmt(cy)}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {_fmt(cy)})">{escape(ylabel)}</text>'
        )
    return out


def _document(body: list[str], width: int, height: int, title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join(
        [head, f"<title>{escape(title)}</title>", f'<rect width="{width}" height="{height}" fill="white"/>']
        + body
        + ["</svg>", ""]
    )


def best_so_far_envelope(curves: dict[int, tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Lowest fitness reached by any population up to each generation."""
    gens = np.unique(np.concatenate([g for g, _ in curves.values()]))
    env = np.full(len(gens), np.inf)
    for g, f in curves.values():
        order = np.argsort(g, kind="stable")
        running = np.minimum.accumulate(np.asarray(f, dtype=float)[order])
        idx = np.searchsorted(gens, np.asarray(g)[order])
        # carry each population's running best forward to later generations
        carried = np.full(len(gens), np.inf)
        carried[idx] = running
        carried = np.minimum.accumulate(carried)
        env = np.minimum(env, carried)
    return gens, env


def fitness_svg(curves: dict[int, tuple[np.ndarray, np.ndarray]], title: str = "best fitness per generation") -> str:
    """One polyline per population plus the best-so-far envelope, on a 0..100 axis."""
    if not curves:
        raise ValueError("no fitness curves to plot")
    left, right, top, bottom = MARGIN
    gens_all = np.concatenate([g for g, _ in curves.values()])
    xlim = (float(gens_all.min()), float(max(gens_all.max(), gens_all.min() + 1)))
    frame = _Frame(left, top, WIDTH - left - right, HEIGHT - top - bottom, xlim, (0.0, 100.0))
    body = _axes(frame, range(0, 101, 20), "generation", "best fitness")
    for k, (pid, (g, f)) in enumerate(sorted(curves.items())):
        colour = PALETTE[k % len(PALETTE)]
        body.append(
            f'<polyline class="population" data-population="{pid}" fill="none" stroke="{colour}" '
            f'stroke-width="1" stroke-opacity="0.7" points="{_points(frame.x(g), frame.y(f))}"/>'
        )
    gens, env = best_so_far_envelope(curves)
    body.append(
        f'<polyline class="envelope" fill="none" stroke="black" stroke-width="2.5" '
        f'points="{_points(frame.x(gens), frame.y(env))}"/>'
    )
    body.append(f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>')
    return _document(body, WIDTH, HEIGHT, title)


def action_trace_svg(actions, labels=None, title: str = "actuator actions") -> str:
    """Step plot of each actuator's action value over control ticks, one strip per actuator."""
    actions = np.asarray(actions, dtype=float)
    if actions.ndim != 2 or actions.shape[0] == 0:
        raise ValueError("actions must be a non-empty (ticks, actuators) array")
    ticks, n = actions.shape
    labels = labels or [f"actuator {a}" for a in range(n)]
    left, right, top, bottom = MARGIN
    strip, gap = 70, 14
    height = top + n * (strip + gap) + bottom
    body = [f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>']
    for a in range(n):
        y0 = top + a * (strip + gap)
        frame = _Frame(left, y0, WIDTH - left - right, strip, (0.0, float(ticks)), (0.6, 1.6))
        body += _axes(frame, (0.6, 1.6), "tick" if a == n - 1 else "", None)
        # each action holds from its tick to the next
        xs = np.repeat(np.arange(ticks + 1), 2)[1:-1]
        ys = np.repeat(actions[:, a], 2)
        body.append(
            f'<polyline class="action" data-actuator="{a}" fill="none" stroke="{PALETTE[a % len(PALETTE)]}" '
            f'stroke-width="1.5" points="{_points(frame.x(xs), frame.y(ys))}"/>'
        )
        body.append(f'<text x="{left + 6}" y="{y0 + 12}" font-size="11">{escape(labels[a])}</text>')
    return _document(body, WIDTH, height, title)
