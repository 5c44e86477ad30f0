import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.config.settings import settings
from src.config.simulation_config import RUN_MANIFEST_VERSION
from src.handlers.error_handler import handle_cli_errors
from src.models.run_config import RunConfig, load_run_config
from src.models.scene import Scene
from src.services.lsystem_service import trunk_attachments
from src.services.scene_builder import TreeSource, build_scene, load_scene, sample_ipp, save_scene
from src.services.tree_generator import load_reference, load_sample_reference, save_tree
from src.services.trajectory_runner import run_trajectory, timing_sweep
from src.utils.exporters import ImpulseExporter, write_plot_data
from src.utils.logger import setup_logger
from src.utils.seeds import derive_seed

logger = setup_logger(__name__)


def _load(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config).with_seed(args.seed)


def _output_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    if args.out is not None:
        return Path(args.out)
    if config.output.directory is not None:
        return Path(config.output.directory)
    return Path(settings.OUTPUT_DIR)


def _tree_source(config: RunConfig) -> TreeSource:
    reference = (
        load_reference(config.reference_tree)
        if config.reference_tree is not None
        else load_sample_reference()
    )
    return TreeSource(
        reference=reference,
        attachments=tuple(trunk_attachments(config.lsystem)),
        params=config.randomization,
    )


def _make_scene(config: RunConfig) -> Scene:
    if config.scene_file is not None:
        return load_scene(config.scene_file)
    ipp = config.ipp.to_config(derive_seed(config.seed, "ipp"))
    if config.ipp.positions is not None:
        positions = np.asarray(config.ipp.positions, dtype=float).reshape(-1, 2)
    else:
        positions = sample_ipp(ipp)
    return build_scene(positions, _tree_source(config), config.seed, domain=ipp.domain)


@handle_cli_errors
def cmd_gen_tree(args: argparse.Namespace) -> int:
    """Generate one randomized tree and write it as JSON."""
    config = _load(args)
    source = _tree_source(config)
    seed = derive_seed(config.seed, "tree", 0)
    tree = source.generate(seed)

    out = Path(args.out) if args.out else _output_dir(args, config) / "tree.json"
    save_tree(
        out,
        tree,
        source.params.model_copy(update={"seed": seed}),
        attachment_count=len(source.attachments),
    )
    summary = tree.summary()
    print(
        f"tree written to {out}: {summary['branch_count']} branches, "
        f"{summary['leaf_count']} leaves, bounding radius {summary['bounding_radius']:.3f} m"
    )
    return 0


@handle_cli_errors
def cmd_gen_scene(args: argparse.Namespace) -> int:
    """Place trees with the configured IPP and write the scene as JSON."""
    config = _load(args)
    scene = _make_scene(config)
    out = Path(args.out) if args.out else _output_dir(args, config) / "scene.json"
    save_scene(out, scene)
    print(f"scene written to {out}: {scene.tree_count} trees, {scene.leaf_count} leaves")
    return 0


def _manifest(config: RunConfig, threads: int) -> Dict[str, Any]:
    return {
        "version": RUN_MANIFEST_VERSION,
        "seed": config.seed,
        "threads": threads,
        "acoustic": config.acoustic.to_config().model_dump(mode="json"),
        "config": config.model_dump(mode="json"),
    }


@handle_cli_errors
def cmd_run(args: argparse.Namespace) -> int:
    """Simulate impulses along the configured trajectory and export them."""
    config = _load(args)
    threads = settings.resolve_threads(args.threads)
    scene = _make_scene(config)
    report = run_trajectory(
        config.trajectory,
        scene,
        config.acoustic.to_config(),
        config.acoustic.leaf,
        threads=threads,
    )

    out = _output_dir(args, config)
    ImpulseExporter(out).write_report(
        report, _manifest(config, threads), write_wav=config.output.write_wav
    )
    silent = sum(1 for p in report.points if p.impulse.is_zero())
    print(
        f"{report.point_count} impulses written to {out} "
        f"({report.tree_count} trees, {silent} silent poses, "
        f"{report.total_wall_time_s:.3f} s)"
    )
    return 0


@handle_cli_errors
def cmd_timing(args: argparse.Namespace) -> int:
    """Median pipeline time over point counts x tree counts."""
    config = _load(args)
    trajectory = config.trajectory
    if trajectory.kind != "circle":
        raise ValueError("timing sweeps need a circle trajectory")
    table = timing_sweep(
        point_counts=config.timing.point_counts,
        tree_counts=config.timing.tree_counts,
        base_spec=trajectory,
        cfg=config.acoustic.to_config(),
        source=_tree_source(config),
        master_seed=config.seed,
        repetitions=config.timing.repetitions,
        leaf=config.acoustic.leaf,
        threads=args.threads,
    )
    out = _output_dir(args, config)
    path = ImpulseExporter(out).write_timing_table(table)
    print(table.to_frame().to_string(float_format=lambda s: f"{s:.4f}"))
    for name, flag in table.monotonic_flags().items():
        print(f"{name}: {flag}")
    print(f"timing table written to {path}")
    return 0


@handle_cli_errors
def cmd_plot_data(args: argparse.Namespace) -> int:
    """Emit per-pose plot series for an existing run directory."""
    run_dir = Path(args.run_dir)
    written = write_plot_data(run_dir)
    print(f"{len(written)} plot-data files written to {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML run configuration")
    common.add_argument("--seed", type=int, default=None, help="Master seed (overrides config)")
    common.add_argument("--out", type=Path, default=None, help="Output file or directory")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads, 0 = one per CPU (default: FOLIAGE_ECHO_THREADS)",
    )

    parser = argparse.ArgumentParser(
        prog="foliage-echo", description="Random foliage scenes and sonar echo simulation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-tree", parents=[common], help="generate a randomized tree").set_defaults(
        handler=cmd_gen_tree
    )
    sub.add_parser("gen-scene", parents=[common], help="sample a tree scene").set_defaults(
        handler=cmd_gen_scene
    )
    sub.add_parser("run", parents=[common], help="simulate a trajectory").set_defaults(
        handler=cmd_run
    )
    sub.add_parser("timing", parents=[common], help="timing sweep table").set_defaults(
        handler=cmd_timing
    )
    plot = sub.add_parser("plot-data", help="export plot series for a run directory")
    plot.add_argument("run_dir", type=Path)
    plot.set_defaults(handler=cmd_plot_data)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
