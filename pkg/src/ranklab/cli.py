"""Config-driven experiment runner.

Usage::

    rank-lab <pretrain|train|compare|variance> --config <path> [--out <dir>] [--seed <int>]

One INI file fully specifies a run (sections: run, dataset, model, trainer,
eval, compare, variance); ``--seed`` overrides the trainer seed and the env
var ``RANK_LAB_OUT`` sets the default output root.  Every command is a pure
function of (config file, input files, seed): reruns are byte-identical.

Outputs land in ``<out>/<run-name>/``: a verbatim copy of the config,
``checkpoints/``, ``curves.csv`` (epoch,model,metric,value) and command-
specific result CSVs.

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure
(training aborts as soon as a parameter goes non-finite).
"""

from __future__ import annotations

import argparse
import configparser
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import parse_baseline
from .core import Dataset, DatasetError
from .dataio import (
    SyntheticSpec,
    Vocab,
    parse_interactions,
    parse_letor,
    parse_qa_pairs,
    split_queries,
    synth_retrieval,
)
from .metrics import evaluate_model, write_eval_csv
from .pgvar import (
    StudyConfig,
    partition_actions,
    sparsity_vs_bound_study,
    study_instance,
    variance_lower_bound,
    verify_variance_bound,
    write_study_csv,
)
from .scorers import Scorer, build_scorer, save_checkpoint
from .trainers import (
    TRAINER_NAMES,
    TRAINER_ROLES,
    InvalidConfigError,
    NumericError,
    SoftmaxPolicy,
    TrainConfig,
    pretrain_mle,
    run_trainer,
)
from ._util import write_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Offsets keep per-role initializations distinct but reproducible from one seed.
ROLE_SEED_OFFSETS = {"G": 11, "D": 23, "M": 11, "A": 11, "B": 23}


class CliConfigError(ValueError):
    pass


class Conf:
    """Typed access to an INI config; errors name the offending key."""

    def __init__(self, path: Path):
        self.parser = configparser.ConfigParser()
        read = self.parser.read(path)
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")
        self.path = path

    def _raw(self, section, key, default, required):
        if not self.parser.has_option(section, key):
            if required:
                raise CliConfigError(f"missing key '{key}' in [{section}]")
            return default
        return self.parser.get(section, key)

    def get(self, section, key, default=None, required=False):
        return self._raw(section, key, default, required)

    def _typed(self, section, key, default, required, convert, type_name):
        raw = self._raw(section, key, default, required)
        if raw is default and not self.parser.has_option(section, key):
            return default
        try:
            return convert(raw)
        except (TypeError, ValueError):
            raise CliConfigError(
                f"bad {type_name} for '{key}' in [{section}]: {raw!r}"
            ) from None

    def get_int(self, section, key, default=None, required=False):
        return self._typed(section, key, default, required, int, "integer")

    def get_float(self, section, key, default=None, required=False):
        return self._typed(section, key, default, required, float, "number")

    def get_bool(self, section, key, default=False):
        raw = self._raw(section, key, None, False)
        if raw is None:
            return default
        if raw.strip().lower() in ("1", "true", "yes", "on"):
            return True
        if raw.strip().lower() in ("0", "false", "no", "off"):
            return False
        raise CliConfigError(f"bad boolean for '{key}' in [{section}]: {raw!r}")

    def get_list(self, section, key, default=None, required=False):
        raw = self._raw(section, key, None, required)
        if raw is None:
            return default if default is not None else []
        return [item.strip() for item in raw.split(",") if item.strip()]


def load_dataset(conf: Conf) -> Dataset:
    source = conf.get("dataset", "source", default="synthetic")
    if source == "synthetic":
        spec = SyntheticSpec(
            num_queries=conf.get_int("dataset", "num_queries", required=True),
            pool_size=conf.get_int("dataset", "pool_size", required=True),
            relevant_fraction=conf.get_float("dataset", "relevant_fraction", required=True),
            feature_dim=conf.get_int("dataset", "feature_dim", required=True),
            noise_sigma=conf.get_float("dataset", "noise_sigma", default=0.0),
            seed=conf.get_int("dataset", "seed", default=0),
        )
        return synth_retrieval(spec)[0]
    path = conf.get("dataset", "path", required=True)
    if source == "letor":
        return parse_letor(path)
    if source == "interactions":
        return parse_interactions(path, threshold=conf.get_float("dataset", "threshold", default=4.0))
    if source == "qa":
        vocab_file = conf.get("dataset", "vocab_file", required=True)
        with open(vocab_file, "r", encoding="utf-8") as fh:
            vocab = Vocab([line.strip() for line in fh if line.strip()])
        return parse_qa_pairs(path, vocab).dataset
    raise CliConfigError(f"bad value for 'source' in [dataset]: {source!r}")


def load_train_config(conf: Conf, seed_override: int | None) -> TrainConfig:
    baseline_text = conf.get("trainer", "baseline", default="constant:0.0")
    try:
        baseline = parse_baseline(baseline_text)
    except ValueError as exc:
        raise CliConfigError(f"bad value for 'baseline' in [trainer]: {exc}") from None
    seed = conf.get_int("trainer", "seed", default=40)
    if seed_override is not None:
        seed = seed_override
    return TrainConfig(
        learning_rate=conf.get_float("trainer", "learning_rate", required=True),
        batch_size=conf.get_int("trainer", "batch_size", default=8),
        epochs_outer=conf.get_int("trainer", "epochs_outer", default=30),
        epochs_inner=conf.get_int("trainer", "epochs_inner", default=1),
        k_samples=conf.get_int("trainer", "k_samples", default=1),
        dns_k=conf.get_int("trainer", "dns_k", default=5),
        baseline=baseline,
        reward=conf.get("trainer", "reward", default="sigmoid-baselined"),
        seed=seed,
        temperature=conf.get_float("trainer", "temperature", default=1.0),
        exclude_positives=conf.get_bool("trainer", "exclude_positives", default=True),
        d_steps=conf.get_int("trainer", "d_steps", default=1),
        g_steps=conf.get_int("trainer", "g_steps", default=1),
        pretrain_epochs=conf.get_int("trainer", "pretrain_epochs", default=0),
        pretrain_lr=conf.get_float("trainer", "pretrain_lr", default=0.01),
    )


def build_model(conf: Conf, dataset: Dataset, role: str, base_seed: int) -> Scorer:
    kind = conf.get("model", "kind", default="mlp1")
    scale = conf.get_float("model", "init_scale", default=0.1)
    seed = conf.get_int("model", "init_seed", default=base_seed) + ROLE_SEED_OFFSETS[role]
    if kind in ("linear", "mlp1"):
        if dataset.feature_dim is None:
            raise DatasetError(f"{kind} scorer needs a dataset with features")
        dims = {"feature_dim": dataset.feature_dim}
        if kind == "mlp1":
            dims["hidden"] = conf.get_int("model", "hidden", default=46)
    elif kind == "matfac":
        doc_ids = sorted({d.id for q in dataset.queries for d in dataset.pool(q.id)})
        dims = {
            "query_ids": dataset.query_ids(),
            "doc_ids": tuple(doc_ids),
            "embed_dim": conf.get_int("model", "embed_dim", default=20),
        }
    elif kind == "text":
        max_token = 0
        for q in dataset.queries:
            if q.tokens:
                max_token = max(max_token, max(q.tokens))
            for d in dataset.pool(q.id):
                if d.tokens:
                    max_token = max(max_token, max(d.tokens))
        dims = {
            "vocab_size": conf.get_int("model", "vocab_size", default=max_token + 1),
            "embed_dim": conf.get_int("model", "embed_dim", default=100),
        }
    else:
        raise CliConfigError(f"bad value for 'kind' in [model]: {kind!r}")
    return build_scorer(kind, dims, scale=scale, seed=seed)


def default_metrics(dataset: Dataset) -> tuple[str, ...]:
    if dataset.kind.value == "qa":
        return ("p@1",)
    return ("p@5", "ndcg@5")


def prepare_run_dir(conf: Conf, args) -> Path:
    out_root = Path(args.out or os.environ.get("RANK_LAB_OUT", "out"))
    name = conf.get("run", "name", default=Path(args.config).stem)
    run_dir = out_root / name
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    shutil.copyfile(args.config, run_dir / "config.copy")
    return run_dir


def split_for_eval(conf: Conf, dataset: Dataset) -> tuple[Dataset, Dataset]:
    holdout = conf.get_float("dataset", "holdout_fraction", default=0.2)
    split_seed = conf.get_int("dataset", "split_seed", default=13)
    return split_queries(dataset, holdout, split_seed)


def cmd_pretrain(conf: Conf, args) -> int:
    dataset = load_dataset(conf)
    cfg = load_train_config(conf, args.seed)
    run_dir = prepare_run_dir(conf, args)
    scorer = build_model(conf, dataset, "G", cfg.seed)
    policy = SoftmaxPolicy(scorer, cfg.temperature)
    record = pretrain_mle(policy, dataset, cfg)
    record.to_csv(run_dir / "curves.csv")
    save_checkpoint(scorer, run_dir / "checkpoints" / "G.ckpt")
    print(f"pretrain: wrote {run_dir / 'curves.csv'}")
    return EXIT_OK


def cmd_train(conf: Conf, args) -> int:
    dataset = load_dataset(conf)
    cfg = load_train_config(conf, args.seed)
    trainer = conf.get("trainer", "name", required=True)
    if trainer not in TRAINER_NAMES:
        raise CliConfigError(
            f"bad value for 'name' in [trainer]: {trainer!r} "
            f"(expected one of {', '.join(TRAINER_NAMES)})"
        )
    run_dir = prepare_run_dir(conf, args)
    train_set, eval_set = split_for_eval(conf, dataset)
    metric_names = tuple(
        conf.get_list("eval", "metrics", default=list(default_metrics(dataset)))
    )
    models = {role: build_model(conf, dataset, role, cfg.seed)
              for role in TRAINER_ROLES[trainer]}
    result = run_trainer(trainer, train_set, cfg, models,
                         eval_dataset=eval_set, metric_names=metric_names)
    result.record.to_csv(run_dir / "curves.csv")
    for role, model in result.models.items():
        save_checkpoint(model, run_dir / "checkpoints" / f"{role}.ckpt")
    if result.chosen is not None:
        with open(run_dir / "checkpoints" / "chosen", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(result.chosen + "\n")
    reports = {
        role: evaluate_model(model, eval_set, metric_names)
        for role, model in result.models.items()
    }
    if result.chosen is not None:
        reports["chosen"] = reports[result.chosen]
    write_eval_csv(reports, run_dir / "results.csv")
    print(f"train[{trainer}]: wrote {run_dir / 'results.csv'}")
    return EXIT_OK


def parity_outer_epochs(budget: int, inner: int) -> int:
    """Budget parity: one dual-d outer epoch (two models, `inner` epochs each)
    spends 2 * inner single-model epochs."""
    return max(1, budget // (2 * inner))


def cmd_compare(conf: Conf, args) -> int:
    dataset = load_dataset(conf)
    cfg = load_train_config(conf, args.seed)
    trainers = conf.get_list("compare", "trainers", required=True)
    if len(trainers) < 2:
        raise CliConfigError("need at least two entries for 'trainers' in [compare]")
    for name in trainers:
        if name not in TRAINER_NAMES:
            raise CliConfigError(f"bad trainer {name!r} in [compare]")
    seeds = [int(s) for s in conf.get_list("compare", "seeds", default=["1"])]
    budget = conf.get_int("compare", "budget_epochs", default=cfg.epochs_outer)
    dual_override = conf.get_int("compare", "dual_d_outer", default=None)
    run_dir = prepare_run_dir(conf, args)
    train_set, eval_set = split_for_eval(conf, dataset)
    metric_names = tuple(
        conf.get_list("eval", "metrics", default=list(default_metrics(dataset)))
    )

    warnings = []
    per_seed_rows = []
    totals: dict[tuple[str, str], list[float]] = {}
    for name in trainers:
        if name == "dual-d":
            outer = parity_outer_epochs(budget, cfg.epochs_inner)
            if dual_override is not None and dual_override != outer:
                warnings.append(
                    ("warning", "budget_parity",
                     float(dual_override * 2 * cfg.epochs_inner - budget))
                )
                outer = dual_override
            run_cfg = replace(cfg, epochs_outer=outer)
        else:
            run_cfg = replace(cfg, epochs_outer=budget)
        for seed in seeds:
            seeded = replace(run_cfg, seed=seed)
            models = {role: build_model(conf, dataset, role, seed)
                      for role in TRAINER_ROLES[name]}
            result = run_trainer(name, train_set, seeded, models)
            eval_role = {"irgan-pointwise": "G", "irgan-pairwise": "G",
                         "single-d": "M", "dns": "D"}.get(name, result.chosen)
            report = evaluate_model(result.models[eval_role], eval_set, metric_names)
            for metric, value in report.values.items():
                per_seed_rows.append((name, seed, metric, value))
                totals.setdefault((name, metric), []).append(value)

    result_rows = [
        (name, metric, float(np.mean(vals)))
        for (name, metric), vals in sorted(totals.items())
    ]
    write_csv(run_dir / "results.csv", ("model", "metric", "value"),
              result_rows + warnings)
    write_csv(run_dir / "per_seed.csv", ("model", "seed", "metric", "value"),
              per_seed_rows)
    print(f"compare: wrote {run_dir / 'results.csv'}")
    return EXIT_OK


def cmd_variance(conf: Conf, args) -> int:
    fractions = [float(f) for f in
                 conf.get_list("variance", "fractions", default=["0.002", "0.005", "0.015"])]
    seed = conf.get_int("variance", "seed", default=7)
    if args.seed is not None:
        seed = args.seed
    study_cfg = StudyConfig(
        num_queries=conf.get_int("variance", "num_queries", default=10),
        pool_size=conf.get_int("variance", "pool_size", default=1000),
        feature_dim=conf.get_int("variance", "feature_dim", default=8),
        noise_sigma=conf.get_float("variance", "noise_sigma", default=0.0),
        init_scale=conf.get_float("variance", "init_scale", default=0.25),
        train_epochs=conf.get_int("variance", "train_epochs", default=5),
        learning_rate=conf.get_float("variance", "learning_rate", default=0.05),
        batch_size=conf.get_int("variance", "batch_size", default=8),
        b=conf.get_float("variance", "b", default=0.5),
        mc_samples=conf.get_int("variance", "mc_samples", default=100_000),
    )
    run_dir = prepare_run_dir(conf, args)
    rows = sparsity_vs_bound_study(fractions, study_cfg, seed)
    write_study_csv(rows, run_dir / "study.csv")

    def opt(v):
        return v if v is not None else "undefined"

    chain_rows = []
    for fraction in fractions:
        instance, policy = study_instance(study_cfg, fraction, seed)
        rep = verify_variance_bound(instance, policy, study_cfg.b)
        chain_rows.append((
            fraction, rep.b, rep.exact_var, rep.below_term, rep.above_term,
            opt(rep.lower_bound), rep.below_mass, opt(rep.max_below),
            rep.pointwise_ok, rep.holds_for_below_term, rep.holds_for_total,
        ))
    write_csv(
        run_dir / "bound_chain.csv",
        ("fraction", "b", "exact_variance", "term_below", "term_above",
         "bound_rhs", "p_below", "q_max", "pointwise_ok", "holds_below", "holds_total"),
        chain_rows,
    )

    sweep = conf.get_list("variance", "b_sweep",
                          default=[str(round(0.1 * i, 1)) for i in range(1, 10)])
    instance, policy = study_instance(study_cfg, fractions[0], seed)
    frozen = partition_actions(instance, study_cfg.b)
    sweep_rows = []
    for b_text in sweep:
        b = float(b_text)
        if frozen.defined:
            bound = variance_lower_bound(instance, policy, b, frozen)
            sweep_rows.append((b, opt(frozen.max_below), bound))
        else:
            sweep_rows.append((b, "undefined", "undefined"))
    write_csv(run_dir / "b_sweep.csv", ("b", "q_max", "bound_rhs"), sweep_rows)
    print(f"variance: wrote {run_dir / 'study.csv'}")
    return EXIT_OK


COMMANDS = {
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "compare": cmd_compare,
    "variance": cmd_variance,
}


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rank-lab",
        description="Train and compare ranking models; run the variance lab.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="INI config path")
        cmd.add_argument("--out", default=None, help="output root (default $RANK_LAB_OUT or ./out)")
        cmd.add_argument("--seed", type=int, default=None, help="override the trainer seed")
    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        conf = Conf(Path(args.config))
        return COMMANDS[args.command](conf, args)
    except (CliConfigError, InvalidConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
