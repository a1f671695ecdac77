from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from services.experiment_service import ALL_MODES, AlgorithmMode, EpisodeLog, RunResult, TraceRecord
from services.world_service import BoxPose, Vec2, box_corners

logger = logging.getLogger(__name__)

# Constantes
FLOAT_FORMAT = "%.6f"
SVG_NS = "http://www.w3.org/2000/svg"
ARENA_MARGIN = 100.0
CHART_WIDTH = 800
CHART_HEIGHT = 500
CHART_MARGIN = 60
OBSTACLE_COLOR = "red"
GOAL_COLOR = "black"
PATH_COLOR = "purple"
BOX_COLOR = "#555555"
BOX_OUTLINE_EVERY = 10
LEARNING_RATIO = 0.5
LEARNING_SEED_SHARE = 0.8
MODE_COLORS = {
    AlgorithmMode.SINGLE_AGENT.value: "#1f77b4",
    AlgorithmMode.MULTI_SEPARATE.value: "#ff7f0e",
    AlgorithmMode.MULTI_SHARED.value: "#2ca02c",
    AlgorithmMode.COOPERATIVE.value: "purple",
}
SVG_KINDS = ("arena_path", "iterations_curve", "comparison_overlay")
ITERATIONS_COLUMNS = ["episode", "iterations", "reached_goal", "cumulative_reward"]
TRACE_COLUMNS = ["episode", "iteration", "sub_step", "x", "y", "angle_deg"]


@dataclass
class ComparisonSummary:
    """Séries d'itérations par épisode et statistiques agrégées par mode."""
    modes: List[str]
    n_seeds: int
    n_episodes: int
    series: pd.DataFrame
    stats: pd.DataFrame = field(default_factory=pd.DataFrame)
    ranking: pd.DataFrame = field(default_factory=pd.DataFrame)
    ranking_ok: Optional[bool] = None
    learning: pd.DataFrame = field(default_factory=pd.DataFrame)
    learning_ok: Optional[bool] = None


def _write_csv(df, path):
    df.to_csv(path, index=False, lineterminator="\n", float_format=FLOAT_FORMAT)
    logger.info(f"CSV écrit : {path} ({len(df)} lignes)")
    return path


def _bool_text(flag):
    return "true" if flag else "false"


# CSV

def iterations_frame(result: RunResult) -> pd.DataFrame:
    rows = [{
        "episode": log.episode_index + 1,
        "iterations": log.iterations_used,
        "reached_goal": _bool_text(log.reached_goal),
        "cumulative_reward": log.cumulative_reward,
    } for log in result.episodes]
    return pd.DataFrame(rows, columns=ITERATIONS_COLUMNS)


def emit_iterations_csv(result: RunResult, path):
    return _write_csv(iterations_frame(result), path)


def _select_episodes(result: RunResult, episode) -> List[EpisodeLog]:
    """Épisode numéroté à partir de 1, "last" ou "all"."""
    if episode == "all":
        return list(result.episodes)
    if episode == "last":
        return [result.episodes[-1]]
    number = int(episode)
    if not 1 <= number <= len(result.episodes):
        raise IndexError(f"épisode {number} hors de [1, {len(result.episodes)}]")
    return [result.episodes[number - 1]]


def trace_frame(result: RunResult, episode="all") -> pd.DataFrame:
    rows = []
    for log in _select_episodes(result, episode):
        for record in log.pose_trace:
            rows.append({
                "episode": log.episode_index + 1,
                "iteration": record.iteration,
                "sub_step": record.sub_step,
                "x": record.pose.center.x,
                "y": record.pose.center.y,
                "angle_deg": record.pose.angle_deg,
            })
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def emit_path_trace(result: RunResult, episode, path):
    return _write_csv(trace_frame(result, episode), path)


def episodes_from_files(iterations_path, trace_path) -> List[EpisodeLog]:
    """Reconstruire les journaux d'épisodes à partir de iterations.csv et trace.csv."""
    iterations = pd.read_csv(iterations_path)
    trace = pd.read_csv(trace_path)
    by_episode = {ep: group for ep, group in trace.groupby("episode", sort=True)}
    episodes = []
    for row in iterations.itertuples(index=False):
        group = by_episode.get(row.episode)
        records = [] if group is None else [
            TraceRecord(int(r.iteration), int(r.sub_step), BoxPose(Vec2(float(r.x), float(r.y)), float(r.angle_deg)))
            for r in group.itertuples(index=False)
        ]
        reached = str(row.reached_goal).lower() == "true"
        episodes.append(EpisodeLog(int(row.episode) - 1, int(row.iterations), reached, records,
                                   float(row.cumulative_reward)))
    return episodes


# Comparaison

def default_windows(n_episodes) -> Dict[str, Tuple[int, int]]:
    """Fenêtres d'épisodes (bornes incluses, à partir de 1) : 10 premiers et 20 derniers."""
    return {
        "first10": (1, min(10, n_episodes)),
        "last20": (max(1, n_episodes - 19), n_episodes),
    }


def _episode_records(results: Sequence[RunResult]) -> pd.DataFrame:
    rows = []
    for result in results:
        for log in result.episodes:
            rows.append({
                "mode": result.config.mode.value,
                "seed": result.config.obstacle_seed,
                "episode": log.episode_index + 1,
                "iterations": log.iterations_used,
                "reached_goal": log.reached_goal,
            })
    return pd.DataFrame(rows, columns=["mode", "seed", "episode", "iterations", "reached_goal"])


def _ranking(records, window, n_seeds) -> Tuple[pd.DataFrame, Optional[bool]]:
    """Comparer, graine par graine, le mode coopératif aux deux modes multi-agents."""
    coop = AlgorithmMode.COOPERATIVE.value
    rivals = [m.value for m in (AlgorithmMode.MULTI_SEPARATE, AlgorithmMode.MULTI_SHARED)]
    present = set(records["mode"])
    if coop not in present:
        return pd.DataFrame(), None
    lo, hi = window
    in_window = records[(records["episode"] >= lo) & (records["episode"] <= hi)]
    means = in_window.pivot_table(index="seed", columns="mode", values="iterations", aggfunc="mean")
    ranking = pd.DataFrame(index=means.index)
    ranking[coop] = means[coop]
    thresholds = {AlgorithmMode.MULTI_SEPARATE.value: 0.8, AlgorithmMode.MULTI_SHARED.value: 0.7}
    ok = True
    for rival in rivals:
        if rival not in present:
            continue
        ranking[rival] = means[rival]
        ranking[f"{coop}_below_{rival}"] = means[coop] < means[rival]
        wins = int(ranking[f"{coop}_below_{rival}"].sum())
        if wins < math.ceil(thresholds[rival] * n_seeds):
            ok = False
    return ranking.reset_index(), ok


def _learning(records, early_window, late_window) -> Tuple[pd.DataFrame, Optional[bool]]:
    """Vérifier, graine par graine, que l'agent seul raccourcit ses trajets et atteint toujours le but."""
    single = records[records["mode"] == AlgorithmMode.SINGLE_AGENT.value]
    if single.empty:
        return pd.DataFrame(), None

    def window(lo_hi):
        lo, hi = lo_hi
        return single[(single["episode"] >= lo) & (single["episode"] <= hi)].groupby("seed")

    learning = pd.DataFrame({
        "early_mean": window(early_window)["iterations"].mean(),
        "late_mean": window(late_window)["iterations"].mean(),
        "late_goal_rate": window(late_window)["reached_goal"].mean(),
    })
    learning["improved"] = ((learning["late_mean"] < LEARNING_RATIO * learning["early_mean"])
                            & (learning["late_goal_rate"] >= 1.0))
    ok = int(learning["improved"].sum()) >= math.ceil(LEARNING_SEED_SHARE * len(learning))
    return learning.reset_index(), ok


def build_comparison_summary(results: Sequence[RunResult], windows=None) -> ComparisonSummary:
    if not results:
        raise ValueError("aucun résultat à comparer")
    records = _episode_records(results)
    present = set(records["mode"])
    modes = [m.value for m in ALL_MODES if m.value in present]
    n_episodes = int(records["episode"].max())
    n_seeds = int(records["seed"].nunique())
    windows = windows or default_windows(n_episodes)

    series = records.pivot_table(index="episode", columns="mode", values="iterations", aggfunc="mean")
    series = series.reindex(columns=modes)
    series.columns.name = None

    stats_rows = []
    for mode in modes:
        for name, (lo, hi) in windows.items():
            chunk = records[(records["mode"] == mode) & (records["episode"] >= lo) & (records["episode"] <= hi)]
            stats_rows.append({
                "mode": mode,
                "window": name,
                "first_episode": lo,
                "last_episode": hi,
                "mean_iterations": float(chunk["iterations"].mean()),
                "median_iterations": float(chunk["iterations"].median()),
                "goal_rate": float(chunk["reached_goal"].mean()),
            })
    stats = pd.DataFrame(stats_rows)

    last_window = windows.get("last20", default_windows(n_episodes)["last20"])
    ranking, ranking_ok = _ranking(records, last_window, n_seeds)
    if ranking_ok is False:
        logger.warning("Classement attendu non reproduit : le mode coopératif ne domine pas les modes multi-agents")
    early_window = windows.get("first10", default_windows(n_episodes)["first10"])
    learning, learning_ok = _learning(records, early_window, last_window)
    if learning_ok is False:
        logger.warning("Apprentissage de l'agent seul non reproduit : trajets pas assez raccourcis ou but manqué")
    return ComparisonSummary(modes, n_seeds, n_episodes, series, stats, ranking, ranking_ok, learning, learning_ok)


def emit_comparison_summary_csv(summary: ComparisonSummary, path):
    df = summary.series.reset_index()
    return _write_csv(df[["episode"] + summary.modes], path)


def emit_comparison_stats_csv(summary: ComparisonSummary, path):
    return _write_csv(summary.stats, path)


def emit_ranking_report(summary: ComparisonSummary, path):
    """Rapport texte du classement et de l'apprentissage ; signale explicitement tout écart attendu."""
    lines = [f"seeds: {summary.n_seeds}", f"episodes: {summary.n_episodes}"]
    if summary.ranking_ok is None:
        lines.append("RANKING_SKIPPED: cooperative mode not in comparison")
    else:
        for column in summary.ranking.columns:
            if column.startswith(f"{AlgorithmMode.COOPERATIVE.value}_below_"):
                wins = int(summary.ranking[column].sum())
                lines.append(f"{column}: {wins}/{summary.n_seeds}")
        lines.append("RANKING_OK" if summary.ranking_ok else "RANKING_MISMATCH: cooperative is not ahead of the "
                                                            "multi-agent modes on the last window")
    if summary.learning_ok is None:
        lines.append("LEARNING_SKIPPED: single mode not in comparison")
    else:
        improved = int(summary.learning["improved"].sum())
        lines.append(f"single_improved: {improved}/{len(summary.learning)}")
        lines.append("LEARNING_OK" if summary.learning_ok else "LEARNING_MISMATCH: single agent does not halve its "
                                                              "iterations or misses the goal on the last window")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    logger.info(f"Rapport de classement écrit : {path}")
    return path


def load_comparison_summary(path) -> ComparisonSummary:
    series = pd.read_csv(path).set_index("episode")
    modes = list(series.columns)
    return ComparisonSummary(modes, 0, len(series), series)


# SVG

def _fmt(value):
    return f"{value:.2f}"


def _svg_root(width, height, view_box):
    return ET.Element("svg", {
        "xmlns": SVG_NS,
        "version": "1.1",
        "width": str(width),
        "height": str(height),
        "viewBox": view_box,
    })


def _write_svg(root, path):
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
    logger.info(f"SVG écrit : {path}")
    return path


def _annulus_path(cx, cy, outer, inner):
    """Anneau (forme de beignet) en deux cercles, remplissage evenodd."""
    def ring(r):
        return (f"M {_fmt(cx - r)} {_fmt(cy)} A {_fmt(r)} {_fmt(r)} 0 1 0 {_fmt(cx + r)} {_fmt(cy)} "
                f"A {_fmt(r)} {_fmt(r)} 0 1 0 {_fmt(cx - r)} {_fmt(cy)} Z")
    return f"{ring(outer)} {ring(inner)}"


def outline_indices(n_records, every):
    """Indices des poses dessinées : une sur `every`, plus la pose finale."""
    if every < 1:
        raise ValueError(f"outline_every doit être >= 1 (reçu {every})")
    return sorted(set(range(0, n_records, every)) | {n_records - 1})


def render_arena_path(result: RunResult, path, episode="last", outline_every=BOX_OUTLINE_EVERY):
    """Arène, obstacles, but, trajectoire(s) du centre et contour de la boîte tous les outline_every pas."""
    arena = result.config.arena
    width = arena.width + 2 * ARENA_MARGIN
    height = arena.height + 2 * ARENA_MARGIN
    root = _svg_root(int(width), int(height),
                     f"{_fmt(-ARENA_MARGIN)} {_fmt(-ARENA_MARGIN)} {_fmt(width)} {_fmt(height)}")
    ET.SubElement(root, "title").text = f"Trajectoire ({result.config.mode.value})"
    # repère du monde : y vers le haut
    world = ET.SubElement(root, "g", {"transform": f"translate(0,{_fmt(arena.height)}) scale(1,-1)"})
    ET.SubElement(world, "rect", {"class": "arena", "x": "0", "y": "0", "width": _fmt(arena.width),
                                  "height": _fmt(arena.height), "fill": "none", "stroke": "black"})
    for obstacle in result.obstacles:
        ET.SubElement(world, "circle", {"class": "obstacle", "cx": _fmt(obstacle.center.x),
                                        "cy": _fmt(obstacle.center.y), "r": _fmt(obstacle.radius),
                                        "fill": OBSTACLE_COLOR})
    goal = result.config.goal
    ET.SubElement(world, "path", {"class": "goal", "d": _annulus_path(goal.center.x, goal.center.y, goal.radius,
                                                                      goal.radius / 2.0),
                                  "fill": GOAL_COLOR, "fill-rule": "evenodd"})
    for log in _select_episodes(result, episode):
        points = " ".join(f"{_fmt(r.pose.center.x)},{_fmt(r.pose.center.y)}" for r in log.pose_trace)
        ET.SubElement(world, "polyline", {"class": "path", "points": points, "fill": "none",
                                          "stroke": PATH_COLOR, "stroke-width": "2"})
        for index in outline_indices(len(log.pose_trace), outline_every):
            corners = box_corners(log.pose_trace[index].pose, result.config.shape)
            ET.SubElement(world, "polygon", {"class": "box",
                                             "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in corners),
                                             "fill": "none", "stroke": BOX_COLOR, "stroke-opacity": "0.5"})
    return _write_svg(root, path)


def _chart_axes(root, x_max, y_max, x_label, y_label):
    left, bottom = CHART_MARGIN, CHART_HEIGHT - CHART_MARGIN
    ET.SubElement(root, "line", {"class": "axis", "x1": str(left), "y1": str(bottom), "x2": str(CHART_WIDTH - CHART_MARGIN),
                                 "y2": str(bottom), "stroke": "black"})
    ET.SubElement(root, "line", {"class": "axis", "x1": str(left), "y1": str(bottom), "x2": str(left),
                                 "y2": str(CHART_MARGIN), "stroke": "black"})
    ET.SubElement(root, "text", {"x": str(CHART_WIDTH // 2), "y": str(CHART_HEIGHT - 15),
                                 "text-anchor": "middle"}).text = x_label
    ET.SubElement(root, "text", {"x": "15", "y": str(CHART_HEIGHT // 2), "text-anchor": "middle",
                                 "transform": f"rotate(-90 15 {CHART_HEIGHT // 2})"}).text = y_label
    ET.SubElement(root, "text", {"x": str(left - 5), "y": str(CHART_MARGIN), "text-anchor": "end"}).text = f"{y_max:g}"
    ET.SubElement(root, "text", {"x": str(CHART_WIDTH - CHART_MARGIN), "y": str(bottom + 20),
                                 "text-anchor": "end"}).text = str(x_max)


def _chart_points(values: Sequence[float], x_max, y_max):
    plot_w = CHART_WIDTH - 2 * CHART_MARGIN
    plot_h = CHART_HEIGHT - 2 * CHART_MARGIN
    points = []
    for k, value in enumerate(values, start=1):
        x = CHART_MARGIN + plot_w * (k - 1) / max(x_max - 1, 1)
        y = CHART_HEIGHT - CHART_MARGIN - plot_h * (value / y_max if y_max else 0.0)
        points.append(f"{_fmt(x)},{_fmt(y)}")
    return " ".join(points)


def render_iterations_curve(result: RunResult, path):
    values = [log.iterations_used for log in result.episodes]
    x_max, y_max = len(values), max(max(values), 1)
    root = _svg_root(CHART_WIDTH, CHART_HEIGHT, f"0 0 {CHART_WIDTH} {CHART_HEIGHT}")
    ET.SubElement(root, "title").text = f"Itérations par épisode ({result.config.mode.value})"
    _chart_axes(root, x_max, y_max, "episode", "iterations")
    ET.SubElement(root, "polyline", {"class": "series", "points": _chart_points(values, x_max, y_max),
                                     "fill": "none", "stroke": MODE_COLORS[result.config.mode.value]})
    return _write_svg(root, path)


def render_comparison_overlay(summary: ComparisonSummary, path):
    x_max = summary.n_episodes
    y_max = max(float(summary.series[summary.modes].max().max()), 1.0)
    root = _svg_root(CHART_WIDTH, CHART_HEIGHT, f"0 0 {CHART_WIDTH} {CHART_HEIGHT}")
    ET.SubElement(root, "title").text = "Comparaison des algorithmes"
    _chart_axes(root, x_max, y_max, "episode", "mean iterations")
    legend = ET.SubElement(root, "g", {"class": "legend"})
    for k, mode in enumerate(summary.modes):
        color = MODE_COLORS.get(mode, "black")
        ET.SubElement(root, "polyline", {"class": f"series mode-{mode}",
                                         "points": _chart_points(list(summary.series[mode]), x_max, y_max),
                                         "fill": "none", "stroke": color})
        y = CHART_MARGIN + 18 * k
        ET.SubElement(legend, "rect", {"x": str(CHART_WIDTH - 190), "y": str(y - 10), "width": "12", "height": "12",
                                       "fill": color})
        ET.SubElement(legend, "text", {"x": str(CHART_WIDTH - 172), "y": str(y)}).text = mode
    return _write_svg(root, path)


def render_svg(source: Union[RunResult, ComparisonSummary], kind, path, episode="last"):
    """Produire une figure SVG 1.1 autonome du type demandé."""
    if kind not in SVG_KINDS:
        raise ValueError(f"type de figure inconnu : {kind} (types valides : {', '.join(SVG_KINDS)})")
    if kind == "comparison_overlay":
        if not isinstance(source, ComparisonSummary):
            raise TypeError("comparison_overlay attend un ComparisonSummary")
        return render_comparison_overlay(source, path)
    if not isinstance(source, RunResult):
        raise TypeError(f"{kind} attend un RunResult")
    if kind == "arena_path":
        return render_arena_path(source, path, episode)
    return render_iterations_curve(source, path)
