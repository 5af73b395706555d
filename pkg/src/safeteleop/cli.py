"""Command-line entry point.

Subcommands cover the whole workflow: run headless episodes, collect a
labeled curriculum dataset, train/evaluate the reward model, replay logs,
host a live driving session, and run the invariant verification suites.
Every subcommand is deterministic given --seed and prints its resolved
configuration before doing work.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _core
from .model import RewardModel
from .training import Dataset, TrainConfig, train
from .world import (
    EpisodeLog,
    Scenario,
    collect_dataset,
    default_curriculum,
    default_scenario,
    make_driver,
    replay,
    run_episode,
)


def _load_scenario(path) -> Scenario:
    return Scenario.load(path) if path else default_scenario()


def _load_model(path) -> RewardModel:
    return RewardModel.load(path)


def _print_config(args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    print(json.dumps({"command": args.command, "backend": _core.backend_name, **cfg},
                     default=str))


def cmd_simulate(args) -> int:
    sc = _load_scenario(args.scenario)
    model = _load_model(args.model) if args.model else None
    rows = []
    worst = np.inf
    for seed in range(args.seed, args.seed + args.seeds):
        drv = make_driver(args.driver, sc, noise=args.noise)
        log = run_episode(sc, drv, model=model, duration=args.duration, seed=seed)
        worst = min(worst, log.min_h)
        rows.append(
            {
                "seed": seed,
                "min_h": log.min_h,
                "switches": len(log.switch_events),
                "mean_intervention": float(
                    np.mean([r.intervention for r in log.ticks])
                ),
            }
        )
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            log.save(out / f"episode_{seed:04d}.jsonl")
    print(json.dumps({"episodes": len(rows), "min_h": worst, "per_seed": rows}))
    return 0 if worst >= -1e-3 else 1


def cmd_collect(args) -> int:
    sc = _load_scenario(args.scenario)
    curriculum = default_curriculum(sc, episodes=args.episodes, seed=args.seed)
    ds = collect_dataset(sc, curriculum, seed=args.seed)
    ds.save(args.out)
    print(json.dumps({"rows": len(ds.rows), "episodes": args.episodes, "out": args.out}))
    return 0


def cmd_train(args) -> int:
    ds = Dataset.load(args.dataset)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        label_shift=args.label_shift,
        seed=args.seed,
        early_stop_acc=args.early_stop_acc,
    )
    model, metrics = train(ds, cfg)
    model.save(args.out)
    last = metrics[-1]
    print(
        json.dumps(
            {
                "epochs_run": len(metrics),
                "train_loss": last.train_loss,
                "val_accuracy": last.val_acc,
                "out": args.out,
            }
        )
    )
    return 0 if last.val_acc >= args.min_accuracy else 1


def cmd_eval(args) -> int:
    ds = Dataset.load(args.dataset)
    model = _load_model(args.model)
    from .training import build_windows, shift_labels

    shifted = shift_labels(ds, args.label_shift)
    tr_X, tr_y, va_X, va_y = build_windows(shifted, model.spec.window)
    X, y = (va_X, va_y) if len(va_y) else (tr_X, tr_y)
    pred = np.argmax(model.forward(X), axis=1)
    acc = float(np.mean(pred == y))
    conf = np.zeros((model.spec.m_k, model.spec.m_k), dtype=int)
    for t, p in zip(y, pred):
        conf[t, p] += 1
    print(json.dumps({"accuracy": acc, "confusion": conf.tolist(), "rows": len(y)}))
    return 0 if acc >= args.min_accuracy else 1


def cmd_replay(args) -> int:
    log = EpisodeLog.load(args.log)
    model = _load_model(args.model) if args.model else None
    res = replay(log, model=model)
    print(
        json.dumps(
            {
                "identical": res.identical,
                "counterfactual": res.counterfactual,
                "first_diff_tick": res.first_diff_tick,
            }
        )
    )
    return 0 if res.identical or res.counterfactual else 1


def cmd_serve(args) -> int:
    from .service import SessionServer

    sc = _load_scenario(args.scenario)
    model = _load_model(args.model) if args.model else None
    srv = SessionServer(sc, model=model, port=args.port)
    srv.start(duration=args.duration)
    print(json.dumps({"port": srv.port, "ws_port": srv.ws_port}), flush=True)
    try:
        srv.wait()
    except KeyboardInterrupt:
        pass
    finally:
        srv.stop()
    return 0


def cmd_verify(args) -> int:
    from . import verification as V

    model = _load_model(args.model) if args.model else None
    checks = [
        V.check_sensitivity(100, seed=args.seed),
        V.check_qp_equivalence(200, seed=args.seed),
        V.check_backup_invariance(args.invariance_states, seed=args.seed),
        V.check_gradients(seed=args.seed),
    ]
    suite, _ = V.run_safety_suite(
        n_seeds=args.episode_seeds, model=model, duration=args.duration
    )
    checks.append(suite)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="safeteleop",
        description="Backup-CBF safety filtering with learned controller switching",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--scenario", help="scenario JSON path (default: built-in)")

    p = sub.add_parser("simulate", help="run headless filtered episodes")
    common(p)
    p.add_argument("--driver", default="rammer",
                   choices=["rammer", "orbiter", "goal_seeker", "waypoints"])
    p.add_argument("--seeds", type=int, default=10, help="number of episodes")
    p.add_argument("--duration", type=float, default=15.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--model", help="trained model for learned switching")
    p.add_argument("--out", help="directory for per-episode logs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("collect", help="collect a labeled curriculum dataset")
    common(p)
    p.add_argument("--episodes", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train the reward model on a dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--label-shift", type=int, default=2)
    p.add_argument("--early-stop-acc", type=float, default=None)
    p.add_argument("--min-accuracy", type=float, default=0.0,
                   help="exit nonzero below this validation accuracy")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--label-shift", type=int, default=2)
    p.add_argument("--min-accuracy", type=float, default=0.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-simulate a recorded episode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", required=True)
    p.add_argument("--model", help="replay under a different model (counterfactual)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="host a live driving session")
    common(p)
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--model")
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("verify", help="run the invariant property suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model")
    p.add_argument("--episode-seeds", type=int, default=10)
    p.add_argument("--invariance-states", type=int, default=200)
    p.add_argument("--duration", type=float, default=10.0)
    p.set_defaults(func=cmd_verify)

    args = ap.parse_args(argv)
    _print_config(args)
    try:
        return args.func(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
