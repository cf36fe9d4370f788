"""``metabwe`` command line: gen-traces, collect, train, eval, ablate, stats.

Exit codes: 0 success, 2 config error, 3 missing or unreadable input,
4 numerical failure during training.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import evaluation, meta
from .config import KEYS, ConfigError, RunConfig, describe_keys, load_config
from .dataset import DatasetFormatError, format_header, format_record, read_dataset
from .rl.checkpoint import CheckpointError, checkpoint_bytes, load_checkpoint
from .rl.iql import LearnedPolicy, NumericalError, train
from .trace import REGIMES, TraceFormatError, format_trace, generate_trace, load_trace

log = logging.getLogger("metabwe")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4


class InputError(RuntimeError):
    pass


def atomic_write(path, data) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _need(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"missing input file: {p}")
    return p


def _dataset(cfg: RunConfig):
    p = _need(cfg["paths.dataset"])
    try:
        return read_dataset(p)
    except DatasetFormatError as e:
        raise InputError(f"{p}: {e}") from None


def _checkpoint(cfg: RunConfig, path=None):
    p = _need(path or cfg["paths.checkpoint"])
    try:
        return load_checkpoint(p)
    except CheckpointError as e:
        raise InputError(f"{p}: {e}") from None


def _dataset_text(ds) -> str:
    return "".join([format_header(ds) + "\n"] + [format_record(t) + "\n" for t in ds.transitions])


def _loss_trace_text(ck) -> str:
    lines = ["epoch,loss_v,loss_q,loss_pi"]
    lines += [f"{i},{lv!r},{lq!r},{lp!r}" for i, (lv, lq, lp) in enumerate(ck.loss_trace)]
    return "\n".join(lines) + "\n"


def loss_trace_path(checkpoint_path) -> Path:
    p = Path(checkpoint_path)
    return p.with_name(p.name + ".loss.csv")


# -- commands ------------------------------------------------------------------

def cmd_gen_traces(cfg: RunConfig) -> list[Path]:
    """Write the holdout traces the evaluation schedule uses, one directory per regime."""
    root = Path(cfg["paths.traces_dir"])
    written = []
    for regime in cfg["traces.regimes"]:
        g = REGIMES.index(regime)
        for i in range(cfg["traces.per_regime"]):
            seed = evaluation.call_seed(cfg["run.seed"], evaluation._EVAL_TRACE, g, i)
            tr = generate_trace(regime, seed, cfg["sim.call_duration"])
            path = root / regime / f"{i:04d}.trace"
            atomic_write(path, format_trace(tr))
            written.append(path)
    log.info("wrote %d traces under %s", len(written), root)
    return written


def cmd_collect(cfg: RunConfig) -> Path:
    ds = evaluation.collect(cfg["collect.calls"], cfg["run.seed"], cfg.pool(), cfg.sim_config(),
                            cfg["collect.regimes"], cfg["run.workers"])
    out = Path(cfg["paths.dataset"])
    atomic_write(out, _dataset_text(ds))
    log.info("wrote %d transitions from %d calls to %s", len(ds), cfg["collect.calls"], out)
    return out


def cmd_train(cfg: RunConfig, resume: str | None = None) -> Path:
    ds = _dataset(cfg)
    if len(ds) == 0:
        raise InputError(f"{cfg['paths.dataset']}: dataset is empty")
    pool_names = tuple(cfg["pool.names"])
    if ds.pool_names and tuple(ds.pool_names) != pool_names:
        raise ConfigError(f"pool.names: dataset was collected with {','.join(ds.pool_names)}")
    start = _checkpoint(cfg, resume) if resume else None

    def progress(epoch, losses):
        log.debug("epoch %d loss_v=%.5f loss_q=%.5f loss_pi=%.5f", epoch, *losses)

    ck = train(ds, cfg.train_config(), resume=start, progress=progress)
    out = Path(cfg["paths.checkpoint"])
    atomic_write(out, checkpoint_bytes(ck))
    atomic_write(loss_trace_path(out), _loss_trace_text(ck))
    log.info("trained %d epochs; checkpoint %s", ck.epochs_done, out)
    return out


def eval_policies(ck, sigma: float, seed: int) -> list:
    """ivy, each fixed estimator, explore-exploit per utility, the rules, and random."""
    pols = [LearnedPolicy(ck, name="ivy")]
    pols += [meta.FixedPolicy(i, name=n) for i, n in enumerate(ck.pool_names)]
    pols += [meta.ExploreExploitPolicy(u, name=u) for u in meta.UTILITIES]
    pols.append(meta.RulePolicy("jitter"))
    pols += [meta.RulePolicy(k, sigma) for k in ("delta", "all_rules")]
    pols.append(meta.RandomPolicy(seed))
    return pols


def _sigma(cfg: RunConfig) -> float:
    st = meta.dataset_stats(_dataset(cfg))
    if not st.sigma > 0:
        raise InputError("dataset gives no usable sigma for the delta rule: "
                         + "; ".join(st.warnings))
    return st.sigma


def _trace_files(cfg: RunConfig) -> dict:
    root = Path(cfg["paths.traces_dir"])
    out = {}
    for regime in cfg["eval.regimes"]:
        files = sorted((root / regime).glob("*.trace"))
        if len(files) < cfg["eval.calls"]:
            raise InputError(f"{root / regime}: need {cfg['eval.calls']} traces, "
                             f"found {len(files)} (run gen-traces)")
        try:
            out[regime] = [load_trace(f) for f in files[:cfg["eval.calls"]]]
        except TraceFormatError as e:
            raise InputError(str(e)) from None
    return out


def cmd_eval(cfg: RunConfig) -> list[Path]:
    ck = _checkpoint(cfg)
    if tuple(ck.pool_names) != tuple(cfg["pool.names"]):
        raise ConfigError(f"pool.names: checkpoint was trained with {','.join(ck.pool_names)}")
    pols = eval_policies(ck, _sigma(cfg), cfg["run.seed"])
    pool = cfg.pool()
    sim = cfg.sim_config()
    trace_set = (_trace_files(cfg) if cfg["eval.trace_source"] == "files"
                 else cfg["eval.regimes"])
    rep = evaluation.run_ab(pols, trace_set, cfg["eval.calls"], cfg["run.seed"], pool, sim,
                            reference="ivy", workers=cfg["run.workers"],
                            paired=cfg["eval.paired"])
    fixed = [LearnedPolicy(ck, name="ivy")] + pols[1:1 + len(pool)]
    ns = evaluation.run_nonstationary(fixed, cfg["run.seed"], cfg["eval.nonstationary_calls"],
                                      pool, sim, cfg["run.workers"], reference="ivy",
                                      paired=cfg["eval.paired"])
    root = Path(cfg["paths.reports_dir"])
    outputs = {
        root / "eval.csv": rep.table_csv(),
        root / "eval_calls.csv": rep.audit_csv(),
        root / "nonstationary.csv": ns.table_csv(),
        root / "nonstationary_timelines.csv": ns.timelines_csv(),
    }
    for path, text in outputs.items():
        atomic_write(path, text)
    log.info("wrote reports under %s", root)
    return list(outputs)


def cmd_ablate(cfg: RunConfig) -> Path:
    """Collect, train and evaluate a metapolicy at each decision interval."""
    pool = cfg.pool()
    tcfg = cfg.train_config()
    sections = []
    for interval in cfg["ablate.intervals"]:
        sim = cfg.sim_config(interval)
        ds = evaluation.collect(cfg["ablate.collect_calls"], cfg["run.seed"], pool, sim,
                                cfg["collect.regimes"], cfg["run.workers"])
        ck = train(ds, tcfg)
        pols = [LearnedPolicy(ck, name="ivy")]
        pols += [meta.FixedPolicy(i, name=e.name) for i, e in enumerate(pool)]
        rep = evaluation.run_ab(pols, cfg["ablate.regimes"], cfg["ablate.eval_calls"],
                                cfg["run.seed"], pool, sim, reference="ivy",
                                workers=cfg["run.workers"], paired=cfg["eval.paired"])
        sections.append((interval, rep))
        log.info("interval %.1f s done", interval)
    out = Path(cfg["paths.reports_dir"]) / "ablation.csv"
    atomic_write(out, ablation_csv(sections))
    return out


def ablation_csv(sections) -> str:
    lines = []
    for interval, rep in sections:
        table = rep.table_csv().splitlines()
        if not lines:
            lines.append("interval," + table[0])
        lines += [f"{interval!r},{row}" for row in table[1:]]
    return "\n".join(lines) + "\n"


def cmd_stats(cfg: RunConfig) -> Path:
    ds = _dataset(cfg)
    if len(ds) == 0:
        raise InputError(f"{cfg['paths.dataset']}: dataset is empty")
    st = meta.dataset_stats(ds)
    names = ds.pool_names or tuple(f"est{i}" for i in range(ds.pool_size))
    lines = [
        f"transitions = {st.n}",
        f"calls = {len({t.call_id for t in ds.transitions})}",
        f"reward_mean = {st.reward_mean!r}",
        f"reward_std = {st.reward_std!r}",
        "action_counts = " + ",".join(f"{n}:{c}" for n, c in zip(names, st.action_counts)),
        f"gap_mean = {st.gap_mean!r}",
        f"sigma = {st.sigma!r}",
        "feature_mean = " + ",".join(repr(float(x)) for x in st.feature_mean),
        "feature_std = " + ",".join(repr(float(x)) for x in st.feature_std),
    ]
    lines += [f"warning = {w}" for w in st.warnings]
    out = Path(cfg["paths.reports_dir"]) / "stats.txt"
    atomic_write(out, "\n".join(lines) + "\n")
    print(f"sigma = {st.sigma!r}")
    return out


# -- argument parsing ------------------------------------------------------------

COMMANDS = {
    "gen-traces": (cmd_gen_traces, "write holdout trace files per regime"),
    "collect": (cmd_collect, "run random-policy calls and write the offline dataset"),
    "train": (cmd_train, "train the metapolicy with implicit Q-learning"),
    "eval": (cmd_eval, "A/B the metapolicy against fixed estimators and heuristics"),
    "ablate": (cmd_ablate, "repeat collect/train/eval at several decision intervals"),
    "stats": (cmd_stats, "summarize a dataset, including the delta rule's sigma"),
}


def build_parser() -> argparse.ArgumentParser:
    epilog = ("config keys ([section] then key = default); override any key with\n"
              "--section-key VALUE, e.g. --train-epochs 50 or --run-seed 3:\n" + describe_keys())
    parser = argparse.ArgumentParser(
        prog="metabwe", description="Trace-driven bandwidth-estimator metapolicy pipeline.",
        epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("-c", "--config", help="configuration file")
        if name == "train":
            p.add_argument("--resume", help="checkpoint to continue training from")
        for k in KEYS:
            p.add_argument(k.flag, dest=k.dotted, metavar="V", default=None,
                           help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        for k in KEYS:
            raw = getattr(args, k.dotted)
            if raw is not None:
                cfg.set(k.dotted, raw)
        cfg.validate()
        if args.command == "train":
            fn(cfg, resume=args.resume)
        else:
            fn(cfg)
    except ConfigError as e:
        print(f"metabwe: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"metabwe: missing input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as e:
        print(f"metabwe: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as e:
        print(f"metabwe: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
