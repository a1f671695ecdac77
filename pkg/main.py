import argparse
import logging
import os
import sys

from reports import (
    build_comparison_summary,
    emit_comparison_stats_csv,
    emit_comparison_summary_csv,
    emit_iterations_csv,
    emit_path_trace,
    emit_ranking_report,
    episodes_from_files,
    load_comparison_summary,
    render_svg,
    SVG_KINDS,
)
from services.config_service import config_hash, load_config, override
from services.experiment_service import ALL_MODES, AlgorithmMode, ExperimentService, RunResult, generate_obstacles
from services.storage_service import ITERATIONS_NAME, TRACE_NAME, StorageService
from utils.errors import BoxPushError

logger = logging.getLogger(__name__)

# Constantes
LOG_FILE = "boxpush.log"
SUMMARY_NAME = "comparison_summary.csv"
STATS_NAME = "comparison_stats.csv"
RANKING_NAME = "ranking.txt"
OVERLAY_NAME = "comparison_overlay.svg"
MODE_CHOICES = [m.value for m in AlgorithmMode]


def configure_logging():
    """Configurer les journaux (fichier + console)."""
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(LOG_FILE),
            logging.StreamHandler()
        ]
    )


class BoxPushApp:
    """Application en ligne de commande : exécution, comparaison et figures."""

    def __init__(self):
        self.experiment_service = ExperimentService()

    def save_run(self, result: RunResult, storage: StorageService, config_path=None):
        """Écrire iterations.csv, trace.csv, les Q-tables et le manifeste d'une exécution."""
        cfg_hash = config_hash(result.config)
        emitted = [
            emit_iterations_csv(result, storage.path(ITERATIONS_NAME)),
            emit_path_trace(result, "all", storage.path(TRACE_NAME)),
        ]
        for index, table in enumerate(result.final_tables):
            emitted.append(storage.save_qtable_snapshot(table, f"qtable_{index}.txt", cfg_hash))
        return storage.write_manifest(result.config, config_path, emitted)

    def run(self, config, out_dir, config_path=None):
        result = self.experiment_service.run_experiment(config)
        manifest = self.save_run(result, StorageService(out_dir), config_path)
        logger.info(f"Exécution enregistrée dans {out_dir} : {len(manifest.files)} fichier(s) + manifeste")
        return result

    def compare(self, config, n_seeds, out_dir, config_path=None, workers=1):
        """Lancer les quatre modes sur n_seeds dispositions et écrire le résumé comparatif."""
        results = self.experiment_service.run_comparison(config, ALL_MODES, n_seeds, max_workers=workers)
        storage = StorageService(out_dir)
        modes_per_seed = len(ALL_MODES)
        for position, result in enumerate(results):
            seed_index = position // modes_per_seed
            self.save_run(result, storage.child(f"{result.config.mode.value}_seed{seed_index}"), config_path)
        summary = build_comparison_summary(results)
        emit_comparison_summary_csv(summary, storage.path(SUMMARY_NAME))
        emit_comparison_stats_csv(summary, storage.path(STATS_NAME))
        emit_ranking_report(summary, storage.path(RANKING_NAME))
        render_svg(summary, "comparison_overlay", storage.path(OVERLAY_NAME))
        logger.info(f"Comparaison terminée : {len(results)} exécutions, classement attendu={summary.ranking_ok}, "
                    f"apprentissage attendu={summary.learning_ok}")
        return summary

    def load_run(self, in_dir) -> RunResult:
        """Reconstruire un RunResult (sans Q-tables) depuis un répertoire d'exécution."""
        storage = StorageService(in_dir)
        manifest = storage.load_manifest()
        storage.verify_manifest(manifest)
        config = manifest.to_config()
        obstacles = generate_obstacles(config.obstacle_seed, config.n_obstacles, config.arena.obstacle_region,
                                       config.obstacle_radius, config.arena.box_start, config.goal, config.shape)
        episodes = episodes_from_files(storage.path(ITERATIONS_NAME), storage.path(TRACE_NAME))
        return RunResult(config, episodes, [], tuple(obstacles))

    def plot(self, in_dir, kind, out, episode="last"):
        if kind == "comparison_overlay":
            source = load_comparison_summary(os.path.join(in_dir, SUMMARY_NAME))
        else:
            source = self.load_run(in_dir)
        return render_svg(source, kind, out, episode=episode)


def _cmd_run(app, args):
    config = load_config(args.config)
    config = override(config, mode=AlgorithmMode(args.mode) if args.mode else None,
                      obstacle_seed=args.obstacle_seed, policy_seed=args.policy_seed)
    app.run(config, args.out, config_path=args.config)
    return 0


def _cmd_compare(app, args):
    config = load_config(args.config)
    summary = app.compare(config, args.seeds, args.out, config_path=args.config, workers=args.workers)
    if summary.ranking_ok is False:
        print(f"attention : classement attendu non reproduit (voir {os.path.join(args.out, RANKING_NAME)})",
              file=sys.stderr)
    if summary.learning_ok is False:
        print(f"attention : apprentissage de l'agent seul non reproduit (voir {os.path.join(args.out, RANKING_NAME)})",
              file=sys.stderr)
    return 0


def _cmd_plot(app, args):
    app.plot(args.in_dir, args.kind, args.out, episode=args.episode)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="boxpush", description="Poussée de boîte et Q-learning multi-agents")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="exécuter un algorithme")
    run.add_argument("--config", default=None, help="fichier `clé = valeur` (défaut : valeurs de référence)")
    run.add_argument("--mode", choices=MODE_CHOICES, default=None)
    run.add_argument("--obstacle-seed", type=int, default=None)
    run.add_argument("--policy-seed", type=int, default=None)
    run.add_argument("--out", required=True)
    run.set_defaults(handler=_cmd_run)

    compare = subparsers.add_parser("compare", help="comparer les quatre algorithmes")
    compare.add_argument("--config", default=None)
    compare.add_argument("--seeds", type=int, default=1)
    compare.add_argument("--workers", type=int, default=1)
    compare.add_argument("--out", required=True)
    compare.set_defaults(handler=_cmd_compare)

    plot = subparsers.add_parser("plot", help="produire une figure SVG")
    plot.add_argument("--in", dest="in_dir", required=True)
    plot.add_argument("--kind", choices=SVG_KINDS, required=True)
    plot.add_argument("--episode", default="last", help="numéro d'épisode (à partir de 1), last ou all")
    plot.add_argument("--out", required=True)
    plot.set_defaults(handler=_cmd_plot)
    return parser


def cli_main(argv=None):
    """Point d'entrée : 0 succès, 1 échec à l'exécution, 2 erreur d'utilisation."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    app = BoxPushApp()
    try:
        return args.handler(app, args)
    except (BoxPushError, OSError, ValueError, IndexError) as e:
        logger.error(f"Échec de la commande {args.command} : {e}")
        print(f"erreur : {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    configure_logging()
    sys.exit(cli_main())
