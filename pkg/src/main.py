"""
Command-line entry point for voxconn.
Simulates datasets, fits regions, pairs and networks, and writes reports.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog
from pydantic import ValidationError

from .artifacts.datasets import load_dataset, save_dataset
from .artifacts.reports import write_report
from .config.settings import LOG_LEVELS, RunConfig, settings
from .core.errors import VoxconnError
from .core.optimize import OptimizerOptions
from .estimators.stage1 import fit_region
from .models.results import NetworkResult, clean_json, write_json
from .pipeline.network import FDR_METHODS, NetworkPipeline, fit_network, reselect
from .pipeline.study import run_study
from .simulation.simulator import PRESETS, get_preset, simulate_dataset
from .utils.log import configure_logging
from .utils.monitoring import metrics_collector

logger = structlog.get_logger(__name__)


def _add_fit_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-basis", type=int, help="Spline basis size K (default 30)")
    parser.add_argument("--stage2-mode", choices=["refine", "fixed"], help="Stage-2 parameter mode")
    parser.add_argument("--optimizer", choices=["bobyqa", "lbfgs"], help="Optimization method")
    parser.add_argument("--max-iter", type=int,
                        help="Objective evaluation cap (bobyqa) or iteration cap (lbfgs) per fit")
    parser.add_argument("--se-mode", choices=["full-inverse", "marginal"], help="Standard error mode")
    parser.add_argument("--alpha", type=float, help="Confidence interval level 1 - alpha")
    parser.add_argument("--q", type=float, help="FDR level")
    parser.add_argument("--allow-duplicate-voxels", action="store_true", default=None,
                        help="Accept repeated voxel coordinates with diagonal jitter")
    parser.add_argument("--fix-fixed-effects", action="store_true", default=None,
                        help="Hold the Stage-1 spline coefficients at their OLS values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxconn",
        description="Voxel-level functional connectivity by two-stage restricted maximum likelihood",
    )
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument("--workers", type=int, help="Worker threads (env VOXCONN_WORKERS)")
    parser.add_argument("--output-dir", help="Output directory (env VOXCONN_OUTPUT_DIR)")
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS,
                        help="Log level (env VOXCONN_LOG_LEVEL)")
    parser.add_argument("--log-json", action="store_true", help="Log JSON lines to stderr")
    parser.add_argument("--metrics", action="store_true",
                        help="Export metrics JSON and Prometheus text after the command")
    parser.add_argument("--seed", type=int, help="Random seed")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Write a simulated dataset")
    simulate.add_argument("--preset", default="paper-s4", choices=sorted(PRESETS))
    simulate.add_argument("--replicate", type=int, default=0)
    simulate.add_argument("--voxels", type=int, help="Voxels per region L")
    simulate.add_argument("--timepoints", type=int, help="Timepoints M")
    simulate.add_argument("--output", help="Dataset directory (default <output-dir>/dataset)")

    fit_region_parser = sub.add_parser("fit-region", help="Stage-1 fit of one region")
    fit_region_parser.add_argument("--dataset", required=True, help="Manifest or dataset directory")
    fit_region_parser.add_argument("--region", required=True, help="Region label")
    fit_region_parser.add_argument("--output", help="Output JSON path")
    _add_fit_arguments(fit_region_parser)

    fit_pair_parser = sub.add_parser("fit-pair", help="Stage-1, Stage-2 and inference for one pair")
    fit_pair_parser.add_argument("--dataset", required=True)
    fit_pair_parser.add_argument("--regions", nargs=2, metavar=("LABEL_1", "LABEL_2"),
                                 help="Pair labels (default: first two regions)")
    fit_pair_parser.add_argument("--output", help="Output JSON path")
    _add_fit_arguments(fit_pair_parser)

    fit_network_parser = sub.add_parser("fit-network", help="Fit all pairs and select edges")
    fit_network_parser.add_argument("--dataset", required=True)
    fit_network_parser.add_argument("--output", help="Output JSON path")
    fit_network_parser.add_argument("--fdr-method", choices=FDR_METHODS, default="by")
    _add_fit_arguments(fit_network_parser)

    report = sub.add_parser("report", help="Write edge list, adjacency, node and estimate files")
    report.add_argument("--network", required=True, help="Network JSON from fit-network")
    report.add_argument("--q", type=float, help="Reselect edges at this FDR level")
    report.add_argument("--fdr-method", choices=FDR_METHODS, default="by")
    report.add_argument("--output", help="Report directory (default <output-dir>/report)")

    study = sub.add_parser("study", help="Replicate simulation study")
    study.add_argument("--preset", default="paper-s4", choices=sorted(PRESETS))
    study.add_argument("--replicates", type=int, default=50)
    study.add_argument("--voxels", type=int, help="Voxels per region L")
    study.add_argument("--timepoints", type=int, help="Timepoints M")
    study.add_argument("--output", help="Study JSON path (default <output-dir>/study.json)")
    _add_fit_arguments(study)

    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config file with command-line overrides; validated before any work."""
    overrides: Dict[str, Any] = {
        "workers": args.workers,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "stage1.n_basis": getattr(args, "n_basis", None),
        "stage1.allow_duplicate_voxels": getattr(args, "allow_duplicate_voxels", None),
        "stage1.fix_fixed_effects": getattr(args, "fix_fixed_effects", None),
        "stage2.mode": getattr(args, "stage2_mode", None),
        "optimizer.method": getattr(args, "optimizer", None),
        "optimizer.max_iter": getattr(args, "max_iter", None),
        "inference.se_mode": getattr(args, "se_mode", None),
        "inference.alpha": getattr(args, "alpha", None),
        "network.q": getattr(args, "q", None),
    }
    return RunConfig.from_sources(args.config, overrides)


def _output_path(explicit: Optional[str], config: RunConfig, default: str) -> Path:
    path = Path(explicit) if explicit else Path(config.output_dir) / default
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _scenario_overrides(args: argparse.Namespace) -> Dict[str, int]:
    overrides = {}
    if args.voxels is not None:
        overrides["L"] = args.voxels
    if args.timepoints is not None:
        overrides["M"] = args.timepoints
    return overrides


def _select_regions(regions, labels: List[str]):
    by_label = {r.label: r for r in regions}
    missing = [label for label in labels if label not in by_label]
    if missing:
        raise ValueError(f"unknown region label(s): {', '.join(missing)}")
    return [by_label[label] for label in labels]


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    scenario = get_preset(args.preset, seed=config.seed, **_scenario_overrides(args))
    regions = simulate_dataset(scenario, args.replicate)
    directory = Path(args.output) if args.output else Path(config.output_dir) / "dataset"
    manifest = save_dataset(regions, directory,
                            metadata={"scenario": scenario.to_dict(), "replicate": args.replicate})
    return {"manifest": str(manifest), "regions": [r.label for r in regions]}


def cmd_fit_region(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    (region,) = _select_regions(load_dataset(args.dataset), [args.region])
    fit = fit_region(region, config.stage1, OptimizerOptions.from_settings(config.optimizer),
                     config.kernels)
    path = _output_path(args.output, config, f"stage1_{region.label}.json")
    fit.save(str(path))
    return {"output": str(path), "status": fit.status}


def cmd_fit_pair(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    regions = load_dataset(args.dataset)
    labels = args.regions or [r.label for r in regions[:2]]
    pair_regions = _select_regions(regions, labels)
    network = NetworkPipeline().run(pair_regions, config)
    pair = network.pairs[0]
    path = _output_path(args.output, config, f"pair_{labels[0]}_{labels[1]}.json")
    write_json({"kind": "pair_fit", **pair.to_dict(),
                "stage1": [f.to_dict() for f in network.stage1]}, str(path))
    return {"output": str(path), "status": pair.status, "rho_hat": pair.rho_hat,
            "se_rho": pair.se_rho, "ci": [pair.ci_lower, pair.ci_upper]}


def cmd_fit_network(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    regions = load_dataset(args.dataset)
    if args.fdr_method == "by":
        network = fit_network(regions, config)
    else:
        network = NetworkPipeline(args.fdr_method).run(regions, config)
    path = _output_path(args.output, config, "network.json")
    network.save(str(path))
    return {"output": str(path), "pairs": len(network.pairs),
            "selected": len(network.selected_edges()), "errors": network.error_messages}


def cmd_report(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    network = NetworkResult.load(args.network)
    if args.q is not None or args.fdr_method != "by":
        network = reselect(network, args.q, args.fdr_method)
    directory = Path(args.output) if args.output else Path(config.output_dir) / "report"
    paths = write_report(network, directory)
    return {name: str(path) for name, path in paths.items()}


def cmd_study(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    scenario = get_preset(args.preset, seed=config.seed, **_scenario_overrides(args))
    result = run_study(scenario, args.replicates, config)
    path = _output_path(args.output, config, "study.json")
    csv_path = path.with_name(path.stem + "_summary.csv")
    result.save(str(path), str(csv_path))
    return {"output": str(path), "summary": str(csv_path), "records": len(result.records)}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-region": cmd_fit_region,
    "fit-pair": cmd_fit_pair,
    "fit-network": cmd_fit_network,
    "report": cmd_report,
    "study": cmd_study,
}


def _emit_error(command: Optional[str], error: Exception) -> None:
    payload = {"command": command, "error": type(error).__name__, "message": str(error)}
    print(json.dumps(payload), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or settings.log_level, args.log_json or settings.log_json)

    try:
        config = build_config(args)
    except (ValidationError, ValueError, OSError) as e:
        _emit_error(args.command, e)
        return 2

    try:
        summary = COMMANDS[args.command](args, config)
    except (VoxconnError, ValueError, OSError) as e:
        logger.error("Command failed", command=args.command, error=str(e))
        _emit_error(args.command, e)
        return 1

    if args.metrics:
        metrics_dir = Path(config.output_dir)
        metrics_dir.mkdir(parents=True, exist_ok=True)
        metrics_collector.export_metrics(str(metrics_dir / "metrics.json"))
        metrics_collector.write_prometheus(str(metrics_dir / "metrics.prom"))
        logger.info("Metrics exported", directory=str(metrics_dir))

    print(json.dumps(clean_json({"command": args.command, **summary})))
    return 0


if __name__ == "__main__":
    exit(main())
