"""``qtsim`` command line: synth | harmonise | chains | train | eval | transfer.

Every stage takes ``--config FILE`` and repeated ``--set key=value`` on top of
its own flags, and writes the resolved configuration next to its outputs.
Errors exit with 2 (config), 3 (schema), 4 (data) or 5 (numeric).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import chains as chainio
from .config import RunConfig
from .errors import ConfigError, QtsimError, SchemaError
from .harmonise import SchemaProfile, Vocabulary, harmonise, intersect_schemas, read_csv, write_csv
from .models import MODEL_KINDS, build_model, load_model, save_model
from .synthetic import write_synthetic
from .train import evaluate, train, transfer_evaluate

log = logging.getLogger("qtsim")

# flag dest -> config key
_FLAG_KEYS = {
    "synth": {
        "seed": "synth.seed", "aircraft": "synth.n_aircraft", "days": "synth.days", "region": "synth.region",
        "difficulty": "synth.difficulty", "violation_rate": "synth.violation_rate",
        "missing_rate": "synth.missing_rate", "delay_shift": "synth.delay_shift", "start_date": "synth.start_date",
    },
    "harmonise": {"keep_weather": "harmonise.keep_weather"},
    "chains": {
        "tau_min": "chain.tau_min", "tau_max": "chain.tau_max", "split": "chain.split_mode",
        "seed": "chain.seed", "length": "chain.length", "ratios": "chain.ratios",
    },
    "train": {
        "model": "model.kind", "seed": "train.seed", "epochs": "train.max_epochs", "lr": "train.lr",
        "batch_size": "train.batch_size", "weight_decay": "train.weight_decay", "channels": "model.channels",
        "hidden_size": "lstm.hidden_size", "layers": "lstm.layers", "dropout": "lstm.dropout",
        "patience": "train.patience", "checkpoint_every": "train.checkpoint_every",
    },
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtsim", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic regional export")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--aircraft", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--region", choices=("us", "eu"))
    p.add_argument("--difficulty", choices=("normal", "separable"))
    p.add_argument("--violation-rate", type=float)
    p.add_argument("--missing-rate", type=float)
    p.add_argument("--delay-shift", type=float)
    p.add_argument("--start-date")
    p.add_argument("--out", required=True, help="raw CSV path; the schema profile goes to OUT.schema.json")

    p = sub.add_parser("harmonise", help="map a raw export onto the shared schema")
    _add_common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--region", help="expected region tag of the schema profile")
    p.add_argument("--schema", help="schema profile JSON (default: IN.schema.json)")
    p.add_argument("--shared-with", help="other region's schema profile; restrict to the common columns")
    p.add_argument("--vocab", help="existing vocabulary to apply instead of fitting one")
    p.add_argument("--keep-weather", action="store_const", const=True, default=None)
    p.add_argument("--out", required=True, help="harmonised CSV; vocabulary goes to OUT.vocab.json")

    p = sub.add_parser("chains", help="build labelled flight chains and split them")
    _add_common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help=".qtc chain file")
    p.add_argument("--tau-min", type=float)
    p.add_argument("--tau-max", type=float)
    p.add_argument("--split", choices=chainio.SPLIT_MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--ratios", help="train,val,test percentages")

    p = sub.add_parser("train", help="train one model kind")
    _add_common(p)
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--chains", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--channels", help="comma-separated conv widths")
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--checkpoint-every", type=int)

    for name, text in (("eval", "score a checkpoint on one partition"),
                       ("transfer", "score a checkpoint on another region's chains")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--chains", required=True)
        p.add_argument("--out", required=True, help="output directory")
        if name == "eval":
            p.add_argument("--partition", default="test", choices=(*chainio.PARTITIONS, "all"))
        else:
            p.add_argument("--source", default="A", help="label of the training region")
            p.add_argument("--target", default="B", help="label of the evaluated region")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    for dest, key in _FLAG_KEYS.get(args.command, {}).items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg.set(key, value)
    return cfg


def _echo(path: Path, args: argparse.Namespace, cfg: RunConfig, inputs: dict) -> None:
    body = {"command": args.command, "inputs": inputs, "config": cfg.to_dict()}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _file_echo(out: str) -> Path:
    return Path(f"{out}.config.json")


def cmd_synth(args, cfg: RunConfig) -> None:
    synth = cfg.build("synth")
    write_synthetic(synth, args.out)
    _echo(_file_echo(args.out), args, cfg, {})
    print(f"wrote {args.out}")


def cmd_harmonise(args, cfg: RunConfig) -> None:
    profile = SchemaProfile.load(args.schema or f"{args.inp}.schema.json")
    if args.region and args.region != profile.region:
        raise SchemaError(f"schema profile is for region {profile.region!r}, not {args.region!r}")
    shared = None
    if args.shared_with:
        other = SchemaProfile.load(args.shared_with)
        shared = intersect_schemas(profile.harmonised_columns(), other.harmonised_columns())
    batch = harmonise(read_csv(args.inp), profile, shared=shared, keep_weather=cfg["harmonise.keep_weather"])
    vocab = Vocabulary.load(args.vocab) if args.vocab else Vocabulary.fit(batch)
    write_csv(vocab.encode(batch), args.out)
    vocab.save(f"{args.out}.vocab.json")
    _echo(_file_echo(args.out), args, cfg, {
        "in": args.inp, "region": args.region, "schema": args.schema, "shared_with": args.shared_with, "vocab": args.vocab,
    })
    print(f"wrote {args.out} ({len(batch)} rows, {len(batch.columns)} columns)")


def cmd_chains(args, cfg: RunConfig) -> None:
    chain_cfg = cfg.build("chain")
    built = chainio.build_chains(chainio.read_harmonised(args.inp), chain_cfg)
    out = chainio.ChainSet.concat_partitions(*chainio.split(built, chain_cfg))
    chainio.save(args.out, out)
    _echo(_file_echo(args.out), args, cfg, {"in": args.inp})
    print(f"wrote {args.out} ({len(out)} chains: {out.splits})")


def cmd_train(args, cfg: RunConfig) -> None:
    if "train.seed" not in cfg.explicit:
        raise ConfigError("train needs an explicit seed (--seed or train.seed)")
    if "model.init_seed" not in cfg.explicit:
        cfg.set("model.init_seed", cfg["train.seed"])
    train_cfg = cfg.build("train")
    model_cfg = cfg.build("model")
    data = chainio.load(args.chains)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out / "config.json", args, cfg, {"chains": args.chains})
    model = build_model(model_cfg, data.feature_names)
    result = train(model, data.partition("train"), data.partition("val"), train_cfg, out_dir=out)
    (out / "history.csv").write_text(result.history_csv(), encoding="utf-8")
    save_model(out / "final.qtm", model, {"epoch": len(result.history)})
    model.load_state_dict(result.best_state)
    save_model(out / "checkpoint.qtm", model, {"epoch": result.best_epoch})
    last = result.history[-1]
    print(f"trained {model_cfg.kind}: {len(result.history)} epochs, best epoch {result.best_epoch}, "
          f"final train_acc {last['train_acc']:.4f} val_acc {last['val_acc']:.4f}")


def _write_report(out: Path, report) -> None:
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")


def cmd_eval(args, cfg: RunConfig) -> None:
    model, _ = load_model(args.checkpoint)
    data = chainio.load(args.chains).partition(args.partition)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out / "config.json", args, cfg, {"checkpoint": args.checkpoint, "chains": args.chains,
                                           "partition": args.partition})
    report = evaluate(model, data, tags={"protocol": "in_region", "partition": args.partition})
    _write_report(out, report)
    print(f"accuracy {report.accuracy:.4f} weighted F1 {report.weighted['f1']:.4f} on {report.n} chains")


def cmd_transfer(args, cfg: RunConfig) -> None:
    model, _ = load_model(args.checkpoint)
    data = chainio.load(args.chains).partition("all")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out / "config.json", args, cfg, {"checkpoint": args.checkpoint, "chains": args.chains,
                                           "source": args.source, "target": args.target})
    report = transfer_evaluate(model, data, args.source, args.target)
    _write_report(out, report)
    print(f"transfer {args.source}->{args.target} ({report.tags['feature_set']}): "
          f"accuracy {report.accuracy:.4f} weighted F1 {report.weighted['f1']:.4f} on {report.n} chains")


COMMANDS = {
    "synth": cmd_synth,
    "harmonise": cmd_harmonise,
    "chains": cmd_chains,
    "train": cmd_train,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except QtsimError as exc:
        print(f"qtsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"qtsim {args.command}: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
