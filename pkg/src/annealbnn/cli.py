"""Command-line entry point: ``annealbnn <subcommand> ...``.

Exit codes: 0 ok, 2 config, 3 divergence, 4 empty structure, 5 I/O or
artifact mismatch, 1 anything else.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, _kernels, artifacts
from .config import config_hash, dump_yaml, load_config, PRESETS
from .errors import AnnealBNNError, ConfigError
from .experiments import (
    TRUE_VARIABLES,
    fit_metrics,
    gen_synthetic,
    run_replicates,
    selection_metrics,
    summarize,
    write_coverage_report,
    write_metrics_report,
)
from .inference import (
    bayesian_intervals,
    coverage_eval,
    interval_rows,
    laplace_intervals,
)
from .network import predict
from .pipeline import PosteriorSamples, fit

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_EMPTY, EXIT_IO = 0, 2, 3, 4, 5


def _config(args):
    return load_config(args.config, args.set or ())


def _load_or_generate(args, cfg):
    if getattr(args, "data", None):
        train, test, meta = artifacts.load_data(args.data)
        return train, test, meta
    train, test, _ = gen_synthetic(cfg.data)
    meta = {"synthetic": True, "config_hash": config_hash(cfg), "data_hash": artifacts.data_hash(train, test)}
    return train, test, meta


def cmd_gen_data(args):
    cfg = _config(args)
    out = artifacts.output_dir(args.out)
    train, test, _ = gen_synthetic(cfg.data)
    meta = artifacts.save_data(
        os.path.join(out, "data.npz"), train, test,
        {"synthetic": True, "config_hash": config_hash(cfg), "seed": cfg.data.seed},
    )
    print(f"wrote {os.path.join(out, 'data.npz')} (data_hash {meta['data_hash']})")
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    out = artifacts.output_dir(args.out)
    train, test, meta = _load_or_generate(args, cfg)
    chash = config_hash(cfg)
    resume = None
    if args.resume:
        resume = artifacts.load_state_checkpoint(args.resume, chash)
    progress = artifacts.JsonLines(os.path.join(out, "progress.jsonl"))
    checkpointer = artifacts.StateCheckpointer(os.path.join(out, "state.json"), chash)
    try:
        model = fit(cfg.run, train, progress=progress, checkpoint=checkpointer, resume=resume)
    finally:
        progress.close()
    provenance = {"config_hash": chash, "data_hash": meta["data_hash"], "config": dump_yaml(cfg)}
    if isinstance(model, PosteriorSamples):
        artifacts.save_samples(os.path.join(out, "model.json"), model, **provenance)
        summary = {"snapshots": len(model), "steps": model.steps}
    else:
        artifacts.save_model(os.path.join(out, "model.json"), model, **provenance)
        summary = dict(model.summary, selected=list(model.selected))
    msfe, mspe = fit_metrics(model, train, test) if test is not None else (fit_metrics(model, train, train)[0], None)
    summary.update(msfe=msfe, mspe=mspe, config_hash=chash, data_hash=meta["data_hash"])
    artifacts.write_json(os.path.join(out, "summary.json"), summary)
    print(f"wrote {os.path.join(out, 'model.json')}; MSFE {msfe:.6g}" + ("" if mspe is None else f", MSPE {mspe:.6g}"))
    return EXIT_OK


def _split(train, test, name):
    if name == "train":
        return train
    if test is None:
        raise ConfigError("data file has no test split")
    return test


def cmd_predict(args):
    model, doc = artifacts.load_model(args.model)
    train, test, meta = artifacts.load_data(args.data)
    artifacts.check_pair(doc, meta, args.force)
    data = _split(train, test, args.split)
    if isinstance(model, PosteriorSamples):
        preds = np.mean([predict(net, data.inputs) for net in model.networks()], axis=0)
    else:
        preds = predict(model.network, data.inputs)
    path = args.out or os.path.join(artifacts.output_dir(None), f"predictions_{args.split}.csv")
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {doc.get('config_hash')}\n# data_hash: {meta['data_hash']}\n")
        fh.write("index,prediction,target\n")
        for i, (p, y) in enumerate(zip(preds, data.targets)):
            fh.write(f"{i},{format(float(p), '.17g')},{format(float(y), '.17g')}\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_evaluate(args):
    model, doc = artifacts.load_model(args.model)
    train, test, meta = artifacts.load_data(args.data)
    artifacts.check_pair(doc, meta, args.force)
    if test is None:
        raise ConfigError("evaluate needs a data file with a test split")
    out = artifacts.output_dir(args.out)
    msfe, mspe = fit_metrics(model, train, test)
    result = {"replicate": 0, "ok": True, "msfe": msfe, "mspe": mspe}
    if isinstance(model, PosteriorSamples):
        ivs = bayesian_intervals(model, train, test.inputs)
    else:
        result["selected"] = list(model.selected)
        ivs = laplace_intervals(model, train, test.inputs)
    cov = coverage_eval(ivs, test.targets)
    result.update(coverage=cov["coverage"], mean_width=cov["mean_width"],
                  interval_rows=list(interval_rows(ivs, test.targets, 0)))
    report = summarize(None, [result], chash=doc.get("config_hash"))
    write_metrics_report(os.path.join(out, "metrics.csv"), report)
    write_coverage_report(os.path.join(out, "coverage.csv"), report)
    line = f"MSFE {msfe:.6g}  MSPE {mspe:.6g}  coverage {cov['coverage']:.4f}"
    if "selected" in result and meta.get("synthetic"):
        rates = selection_metrics([result["selected"]], TRUE_VARIABLES)
        line += f"  |S| {len(result['selected'])}  FSR {rates.fsr:.3f}  NSR {rates.nsr:.3f}"
    print(line)
    return EXIT_OK


def cmd_coverage(args):
    cfg = _config(args)
    out = artifacts.output_dir(args.out)
    replicates = args.replicates or cfg.experiment.coverage_replicates
    report = run_replicates(cfg, replicates=replicates, workers=args.workers)
    write_metrics_report(os.path.join(out, "metrics.csv"), report)
    write_coverage_report(os.path.join(out, "coverage.csv"), report)
    cov = report.get("coverage")
    print(
        f"{report['replicates']} replicates, {len(report['failures'])} failed"
        + ("" if cov is None else f"; mean coverage {cov['mean']:.4f} (sd {cov['sd']:.4f})")
    )
    return EXIT_OK if len(report["failures"]) < report["replicates"] else EXIT_IO


def cmd_info(args):
    if args.defaults:
        print(dump_yaml(load_config(None)), end="")
        return EXIT_OK
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; available: {sorted(PRESETS)}")
        print(dump_yaml(load_config(text=f"preset: {args.preset}\n")), end="")
        return EXIT_OK
    print(f"annealbnn {__version__}")
    print(f"kernel backend: {_kernels.BACKEND}")
    print(f"presets: {', '.join(sorted(PRESETS))}")
    print("exit codes: 0 ok, 2 config, 3 divergence, 4 empty structure, 5 I/O")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="annealbnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", "-c", help="YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, repeatable")
        p.add_argument("--out", "-o", help=f"output directory (default ${artifacts.OUTPUT_DIR_ENV} or ./runs)")

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    with_config(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit a model (frequentist or bayesian per config)")
    with_config(p)
    p.add_argument("--data", help="dataset written by gen-data (default: generate from config)")
    p.add_argument("--resume", help="sampler state checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write predictions for one split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", "-o", help="output CSV path")
    p.add_argument("--force", action="store_true", help="skip the model/data hash check")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics and prediction intervals on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", "-o")
    p.add_argument("--force", action="store_true", help="skip the model/data hash check")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("coverage", help="replicate study: selection, errors, interval coverage")
    with_config(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("info", help="version, backend, defaults")
    p.add_argument("--defaults", action="store_true", help="print the default config")
    p.add_argument("--preset", help="print an expanded preset")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except AnnealBNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
