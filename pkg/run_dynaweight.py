#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Dynaweight estimates camera poses in dynamic scenes, weighting every
keypoint and map point by its probability of being static. Subcommands:
"run" processes a frames file, "eval" compares two trajectories and
"synth" generates a synthetic test scene.
"""

import argparse
import logging
import sys

from dynaweight.config import MODES, EngineConfig, load_config
from dynaweight.errors import ConfigError, EvalUnderconstrained, InputError
from dynaweight.io_eval import (
    ASSOCIATION_WINDOW,
    ate,
    load_sequence,
    read_trajectory_tum,
    rpe,
    write_diagnostics,
    write_labels,
    write_sequence,
    write_trajectory_tum,
)
from dynaweight.pipeline import lost_fraction, run_sequence
from dynaweight.synth import SceneSpec, generate_scene, load_scene_spec

logger = logging.getLogger("dynaweight")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_LOST = 2
LOST_LIMIT = 0.5


def new_argument_parser():
    "Command line parser"
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        '-v',
        dest='verbose',
        action='store_true',
        default=False,
        help='debug output [False]',
    )
    parser.add_argument(
        '-q',
        dest='quiet',
        action='store_true',
        default=False,
        help='warnings and errors only [False]',
    )
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    run = commands.add_parser('run', help='estimate a trajectory')
    run.add_argument(
        '--input',
        dest='input',
        required=True,
        help='frames file (JSON lines)',
    )
    run.add_argument(
        '--config',
        dest='config',
        default=None,
        help='config file of key = value lines (optional) []',
    )
    run.add_argument(
        '--mode',
        dest='mode',
        default=None,
        choices=MODES,
        help='weighting mode [full]',
    )
    run.add_argument(
        '--out-traj',
        dest='out_traj',
        default='trajectory.txt',
        help='trajectory file, TUM format [trajectory.txt]',
    )
    run.add_argument(
        '--out-diag',
        dest='out_diag',
        default=None,
        help='per-frame diagnostics file (optional) []',
    )
    run.add_argument(
        '--seed',
        dest='seed',
        default=None,
        type=int,
        help='random seed [0]',
    )

    evaluate = commands.add_parser('eval', help='compare trajectories')
    evaluate.add_argument(
        '--est',
        dest='est',
        required=True,
        help='estimated trajectory, TUM format',
    )
    evaluate.add_argument(
        '--gt',
        dest='gt',
        required=True,
        help='ground truth trajectory, TUM format',
    )
    evaluate.add_argument(
        '--metric',
        dest='metric',
        default='ate',
        choices=('ate', 'rpe'),
        help='metric [ate]',
    )
    evaluate.add_argument(
        '--delta',
        dest='delta',
        default=1,
        type=int,
        help='RPE frame distance [1]',
    )
    evaluate.add_argument(
        '--window',
        dest='window',
        default=ASSOCIATION_WINDOW,
        type=float,
        help='timestamp association window in s [0.02]',
    )

    synth = commands.add_parser('synth', help='generate a synthetic scene')
    synth.add_argument(
        '--spec',
        dest='spec',
        default=None,
        help='scene file of key = value lines (optional) []',
    )
    synth.add_argument(
        '--seed',
        dest='seed',
        default=0,
        type=int,
        help='random seed [0]',
    )
    synth.add_argument(
        '--out',
        dest='out',
        default='frames.jsonl',
        help='frames file [frames.jsonl]',
    )
    synth.add_argument(
        '--out-gt',
        dest='out_gt',
        default='groundtruth.txt',
        help='ground truth trajectory [groundtruth.txt]',
    )
    synth.add_argument(
        '--out-labels',
        dest='out_labels',
        default=None,
        help='static/dynamic labels file (optional) []',
    )
    return parser


def run(args):
    if args.config is not None:
        cfg = load_config(args.config, mode=args.mode, seed=args.seed)
    else:
        overrides = {
            key: value for key, value in
            (("mode", args.mode), ("seed", args.seed)) if value is not None
        }
        cfg = EngineConfig(**overrides)
    frames = load_sequence(args.input)
    trajectory, results = run_sequence(frames, cfg)
    write_trajectory_tum(trajectory, args.out_traj)
    if args.out_diag is not None:
        write_diagnostics(results, args.out_diag)
    lost = lost_fraction(results)
    if lost > LOST_LIMIT:
        logger.error("tracking lost on %.0f%% of frames", 100 * lost)
        return EXIT_LOST
    return EXIT_OK


def evaluate(args):
    est = read_trajectory_tum(args.est)
    gt = read_trajectory_tum(args.gt)
    if args.metric == 'ate':
        rmse, sd = ate(est, gt, args.window)
        print("ate.rmse %.6f" % rmse)
        print("ate.sd %.6f" % sd)
    else:
        t_rmse, t_sd, r_rmse, r_sd = rpe(est, gt, args.delta, args.window)
        print("rpe.trans.rmse %.6f" % t_rmse)
        print("rpe.trans.sd %.6f" % t_sd)
        print("rpe.rot.rmse %.6f" % r_rmse)
        print("rpe.rot.sd %.6f" % r_sd)
    return EXIT_OK


def synthesise(args):
    if args.spec is not None:
        spec = load_scene_spec(args.spec)
    else:
        spec = SceneSpec()
    frames, trajectory, labels = generate_scene(spec, args.seed)
    write_sequence(frames, args.out)
    write_trajectory_tum(trajectory, args.out_gt)
    if args.out_labels is not None:
        write_labels(labels, args.out_labels)
    return EXIT_OK


def main(argv=None):
    args = new_argument_parser().parse_args(argv)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s",
    )
    commands = {'run': run, 'eval': evaluate, 'synth': synthesise}
    try:
        return commands[args.command](args)
    except (InputError, ConfigError, EvalUnderconstrained, OSError) as error:
        logger.error("%s", error)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
