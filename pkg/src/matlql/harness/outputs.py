"""Metrics records, CSV round-trips, summaries and SVG plots."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .stats import mean_std, moving_average

BASE_COLUMNS = ("seed", "phase", "episode", "agent", "return", "win", "eps_prime", "adv_opportunities")


@dataclass(frozen=True)
class MetricsRecord:
    seed: int
    phase: str
    episode: int
    agent: int
    ret: float
    win: bool
    eps_prime: float
    opportunities: int
    selected: tuple[int, ...] = ()

    def __post_init__(self):
        if sum(self.selected) > self.opportunities:
            raise ValueError("advisor selections exceed opportunities")


def _g(x: float) -> str:
    return "%.17g" % x


def header(num_advisors: int) -> str:
    return ",".join(BASE_COLUMNS + tuple(f"adv_selected_{i}" for i in range(num_advisors)))


def emit_csv(records: Sequence[MetricsRecord], num_advisors: int | None = None) -> str:
    if num_advisors is None:
        num_advisors = max((len(r.selected) for r in records), default=0)
    lines = [header(num_advisors)]
    for r in records:
        sel = list(r.selected) + [0] * (num_advisors - len(r.selected))
        row = [str(r.seed), r.phase, str(r.episode), str(r.agent), _g(r.ret), str(int(r.win)),
               _g(r.eps_prime), str(r.opportunities)] + [str(v) for v in sel]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[MetricsRecord]:
    rows = text.rstrip("\n").split("\n")
    cols = rows[0].split(",")
    if tuple(cols[:len(BASE_COLUMNS)]) != BASE_COLUMNS:
        raise ValueError("not a metrics CSV header")
    k = len(cols) - len(BASE_COLUMNS)
    out = []
    for line in rows[1:]:
        f = line.split(",")
        if len(f) != len(cols):
            raise ValueError(f"expected {len(cols)} fields, got {len(f)}: {line!r}")
        out.append(MetricsRecord(int(f[0]), f[1], int(f[2]), int(f[3]), float(f[4]), f[5] == "1",
                                 float(f[6]), int(f[7]), tuple(int(v) for v in f[8:8 + k])))
    return out


def write_text(path: str, text: str) -> None:
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def read_csv(path: str) -> list[MetricsRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def per_seed_series(records: Iterable[MetricsRecord], phase: str, agent: int, attr: str = "ret") -> dict[int, list[float]]:
    series: dict[int, list[tuple[int, float]]] = {}
    for r in records:
        if r.phase == phase and r.agent == agent:
            series.setdefault(r.seed, []).append((r.episode, float(getattr(r, attr))))
    return {s: [v for _, v in sorted(pts)] for s, pts in sorted(series.items())}


@dataclass
class Curve:
    mean: np.ndarray
    std: np.ndarray
    smoothed: np.ndarray


@dataclass
class AlgorithmSummary:
    name: str
    training: Curve | None = None
    execution_win: Curve | None = None
    seed_train_return: dict[int, float] = field(default_factory=dict)
    seed_exec_return: dict[int, float] = field(default_factory=dict)
    seed_exec_win: dict[int, float] = field(default_factory=dict)


def summarize(name: str, records: Sequence[MetricsRecord], agent: int = 0, window: int = 100) -> AlgorithmSummary:
    out = AlgorithmSummary(name)
    train = per_seed_series(records, "training", agent)
    if train and all(train.values()):
        lengths = {len(v) for v in train.values()}
        if len(lengths) == 1:
            m, s = mean_std(list(train.values()))
            out.training = Curve(m, s, moving_average(m, window))
        out.seed_train_return = {k: float(np.mean(v)) for k, v in train.items()}
    exe = per_seed_series(records, "execution", agent)
    wins = per_seed_series(records, "execution", agent, "win")
    if exe and all(exe.values()):
        out.seed_exec_return = {k: float(np.mean(v)) for k, v in exe.items()}
        out.seed_exec_win = {k: float(np.mean(v)) for k, v in wins.items()}
        rates = [[v] for v in out.seed_exec_win.values()]
        m, s = mean_std(rates)
        out.execution_win = Curve(m, s, m)
    return out


def summary_table(summaries: Sequence[AlgorithmSummary]) -> str:
    lines = ["algorithm,seeds,train_return_mean,train_return_std,exec_return_mean,exec_win_mean,exec_win_std"]
    for s in summaries:
        tr = list(s.seed_train_return.values())
        er = list(s.seed_exec_return.values())
        ew = list(s.seed_exec_win.values())

        def ms(v):
            if not v:
                return "", ""
            return _g(float(np.mean(v))), _g(float(np.std(v, ddof=1)) if len(v) > 1 else 0.0)
        trm, trs = ms(tr)
        erm, _ = ms(er)
        ewm, ews = ms(ew)
        lines.append(",".join([s.name, str(max(len(tr), len(ew))), trm, trs, erm, ewm, ews]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# advisor listening frequency
# ---------------------------------------------------------------------------

GAP = None


def advisor_frequency_report(records: Iterable[MetricsRecord], agent: int = 0, phase: str = "training",
                             window: int = 1) -> dict[int, list[list[float | None]]]:
    """Per seed, per advisor: selections / opportunities over consecutive
    windows of ``window`` episodes. Windows without opportunities hold
    ``None`` (a gap, not a zero)."""
    by_seed: dict[int, list[MetricsRecord]] = {}
    for r in records:
        if r.agent == agent and r.phase == phase:
            by_seed.setdefault(r.seed, []).append(r)
    out = {}
    for seed, rs in sorted(by_seed.items()):
        rs.sort(key=lambda r: r.episode)
        k = max((len(r.selected) for r in rs), default=0)
        curves: list[list[float | None]] = [[] for _ in range(k)]
        for start in range(0, len(rs), window):
            chunk = rs[start:start + window]
            opp = sum(r.opportunities for r in chunk)
            for i in range(k):
                if opp == 0:
                    curves[i].append(GAP)
                else:
                    curves[i].append(sum(r.selected[i] for r in chunk if i < len(r.selected)) / opp)
        out[seed] = curves
    return out


def listening_fractions(records: Iterable[MetricsRecord], agent: int = 0, first_episode: int = 0,
                        phase: str = "training") -> dict[int, list[float | None]]:
    """Per seed, the fraction of opportunities spent on each advisor over
    episodes ``>= first_episode`` (``None`` if there were none)."""
    agg: dict[int, tuple[int, list[int]]] = {}
    for r in records:
        if r.agent != agent or r.phase != phase or r.episode < first_episode:
            continue
        opp, sel = agg.get(r.seed, (0, [0] * len(r.selected)))
        agg[r.seed] = (opp + r.opportunities, [a + b for a, b in zip(sel, r.selected)])
    return {s: [(v / opp if opp else GAP) for v in sel] for s, (opp, sel) in sorted(agg.items())}


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def svg_line_plot(curves: dict[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
                  xlabel: str = "episode", ylabel: str = "return", width: int = 640, height: int = 400) -> str:
    """Mean lines with a shaded +-std band, one per entry of ``curves``."""
    pad = 50
    allv = [v for m, s in curves.values() for v in list(np.asarray(m) - np.asarray(s)) + list(np.asarray(m) + np.asarray(s))]
    finite = [v for v in allv if math.isfinite(v)] or [0.0, 1.0]
    lo, hi = min(finite), max(finite)
    n = max((len(m) for m, _ in curves.values()), default=1)
    fx = _scale(0, max(n - 1, 1), pad, width - pad)
    fy = _scale(lo, hi, height - pad, pad)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="15" y="{height / 2:.1f}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {height / 2:.1f})">{ylabel}</text>',
             f'<text x="{pad - 5}" y="{height - pad}" text-anchor="end" font-size="10">{lo:.3g}</text>',
             f'<text x="{pad - 5}" y="{pad + 4}" text-anchor="end" font-size="10">{hi:.3g}</text>']
    for i, (name, (m, s)) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        m = np.asarray(m, dtype=float)
        s = np.asarray(s, dtype=float)
        upper = " ".join(f"{fx(x):.2f},{fy(v):.2f}" for x, v in enumerate(m + s))
        lower = " ".join(f"{fx(x):.2f},{fy(v):.2f}" for x, v in reversed(list(enumerate(m - s))))
        parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{fx(x):.2f},{fy(v):.2f}" for x, v in enumerate(m))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad - 5}" y="{pad + 15 * (i + 1)}" text-anchor="end" font-size="12" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_bar_chart(values: dict[str, tuple[float, float]], title: str = "", ylabel: str = "win rate",
                  width: int = 480, height: int = 360) -> str:
    """Bars of mean height with a +-std whisker."""
    pad = 50
    hi = max([m + s for m, s in values.values()] + [1e-9])
    lo = min([0.0] + [m - s for m, s in values.values()])
    fy = _scale(lo, hi, height - pad, pad)
    n = max(len(values), 1)
    slot = (width - 2 * pad) / n
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{fy(0):.2f}" x2="{width - pad}" y2="{fy(0):.2f}" stroke="black"/>',
             f'<text x="15" y="{height / 2:.1f}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {height / 2:.1f})">{ylabel}</text>']
    for i, (name, (m, s)) in enumerate(values.items()):
        x = pad + i * slot + slot * 0.15
        w = slot * 0.7
        top, base = fy(max(m, 0.0)), fy(min(m, 0.0))
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<rect x="{x:.2f}" y="{top:.2f}" width="{w:.2f}" height="{base - top:.2f}" fill="{color}"/>')
        cx = x + w / 2
        parts.append(f'<line x1="{cx:.2f}" y1="{fy(m - s):.2f}" x2="{cx:.2f}" y2="{fy(m + s):.2f}" stroke="black"/>')
        parts.append(f'<text x="{cx:.2f}" y="{height - pad + 15}" text-anchor="middle" font-size="11">{name}</text>')
        parts.append(f'<text x="{cx:.2f}" y="{top - 4:.2f}" text-anchor="middle" font-size="10">{m:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_outputs(out_dir: str, summaries: Sequence[AlgorithmSummary], comparisons: Sequence[str] = ()) -> list[str]:
    """Write the summary table, the report text and the plots; returns paths."""
    paths = []
    p = os.path.join(out_dir, "summary.csv")
    write_text(p, summary_table(summaries))
    paths.append(p)
    curves = {s.name: (s.training.mean, s.training.std) for s in summaries if s.training is not None}
    if curves:
        p = os.path.join(out_dir, "training_returns.svg")
        write_text(p, svg_line_plot(curves, "training return (mean +- std over seeds)"))
        paths.append(p)
        smooth = {s.name: (s.training.smoothed, np.zeros_like(s.training.smoothed))
                  for s in summaries if s.training is not None}
        p = os.path.join(out_dir, "training_returns_smoothed.svg")
        write_text(p, svg_line_plot(smooth, "training return, moving average"))
        paths.append(p)
    bars = {s.name: (float(s.execution_win.mean[0]), float(s.execution_win.std[0]))
            for s in summaries if s.execution_win is not None}
    if bars:
        p = os.path.join(out_dir, "execution_win_rate.svg")
        write_text(p, svg_bar_chart(bars, "execution win rate"))
        paths.append(p)
    if comparisons:
        p = os.path.join(out_dir, "report.txt")
        write_text(p, "\n".join(comparisons) + "\n")
        paths.append(p)
    return paths
