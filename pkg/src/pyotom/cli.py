"""
Command line entry point: ``pyotom <command> --out-dir DIR [options]``.

Every command writes only inside its output directory: its artifacts under
fixed names, the resolved configuration (``resolved_config.json``) and a
machine readable ``summary.json``. Exit codes are 0 on success, 2 for usage
or configuration errors and 3 for runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import sys
import time
from os import path as os_path

import numpy as np

from . import loadEnv, version
from .tools import bloch, dataset, fit, images, neural, phantom, schedule
from .utils.env import LOGS_DIR
from .utils.exceptions import ConfigError, DomainError, OtomError
from .utils.file import AtomicWriter, save
from .utils.path import existPath, joinPath, makePath

_logger = logging.getLogger(__name__)

__all__ = ["EXIT_OK", "EXIT_USAGE", "EXIT_RUNTIME", "buildParser", "main", "parseTissue", "saveFingerprint",
           "loadFingerprint"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

RESOLVED_CONFIG = "resolved_config.json"
SUMMARY = "summary.json"
# Wall-clock times of the run, the one output that differs between identical runs
TIMINGS = "timings.json"
FINGERPRINT_CSV = "fingerprint.csv"
MODEL_FILE = "model.otomnn"
TRANSFER_MODEL_FILE = "model_transfer.otomnn"
FCNN_MODEL_FILE = "fcnn.otomnn"
FIT_FILE = "fit.json"
MAE_TABLE = "mae_table.csv"
REPORTS_DIR = "reports"
FINGERPRINT_HEADER = schedule.CSV_HEADER + ("signal",)

# Config section whose seed --seed overrides, per command
SEED_SECTIONS = {"gendata": "dataset", "train": "train", "transfer": "transfer",
                 "fcnn": "fcnn", "fit": "fit", "eval": "eval"}


def parseTissue(items: list[str]) -> bloch.TissueParams:
    """
    Parse ``name=value`` pairs naming all four tissue parameters in SI units.

    :param items: Pairs such as 'kmw=40', should be a list[str]
    :return: tissue - TissueParams
    """
    values = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        name = name.strip()
        if not sep or name not in bloch.PARAM_NAMES:
            raise ConfigError(f"Invalid tissue field '{item}', expected one of {bloch.PARAM_NAMES} as name=value")
        try:
            values[name] = float(value)
        except ValueError:
            raise ConfigError(f"Tissue field '{name}' needs a number, got: '{value}'")
    missing = [name for name in bloch.PARAM_NAMES if name not in values]
    if missing:
        raise ConfigError(f"Missing tissue field(s): {', '.join(missing)}")
    return bloch.TissueParams(**values)


def saveFingerprint(path: str, sched: schedule.Schedule, signal):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(FINGERPRINT_HEADER)
    for index, (point, value) in enumerate(zip(sched.points, np.asarray(signal, dtype=np.float64))):
        writer.writerow([index] + [f"{item:.17g}" for item in point] + [f"{value:.17g}"])
    with AtomicWriter(path, "wb") as file:
        file.write(buffer.getvalue().encode("utf-8"))


def loadFingerprint(path: str) -> tuple[schedule.Schedule, np.ndarray]:
    """Read a fingerprint CSV back into its schedule and signal."""
    with open(path, "r", encoding="utf-8", newline="") as file:
        rows = list(csv.reader(file))
    if not rows or tuple(column.strip() for column in rows[0]) != FINGERPRINT_HEADER:
        raise DomainError(f"'{path}' does not start with the header {','.join(FINGERPRINT_HEADER)}")
    try:
        table = np.array([[float(value) for value in row[1:]] for row in rows[1:] if row], dtype=np.float64)
    except ValueError as e:
        raise DomainError(f"'{path}' holds a non-numeric value: {e}")
    if table.size == 0:
        raise DomainError(f"'{path}' holds no scans")
    name = os_path.splitext(os_path.basename(path))[0]
    return schedule.Schedule(table[:, :4], name), table[:, 4]


def _inputPath(path: str, what: str) -> str:
    if not path or not existPath(path):
        raise ConfigError(f"Missing {what}: '{path}'")
    return path


def _scheduleArgs(parser: argparse.ArgumentParser, multiple: bool = False, required: bool = True):
    group = parser.add_mutually_exclusive_group(required=required)
    action = "append" if multiple else "store"
    group.add_argument("--schedule", action=action, metavar="CSV", help="schedule CSV file")
    group.add_argument("--fixture", action=action, type=int, choices=schedule.FIXTURE_LENGTHS,
                       help="bundled schedule of this length")


def buildParser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", required=True, help="directory receiving every output of the run")
    common.add_argument("--config", default="", help="JSON run config overlaid on the defaults")
    common.add_argument("--seed", type=int, help="seed of the command's stochastic stage")
    common.add_argument("--deterministic", action="store_true", help="single worker, byte-reproducible outputs")
    common.add_argument("--log-file", action="store_true", help=f"also write logs under <out-dir>/{LOGS_DIR}")
    common.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="console log level")

    parser = argparse.ArgumentParser(prog=version.PROJECT_NAME,
                                     description="Schedule-agnostic MT fingerprint quantification toolkit")
    parser.add_argument("--version", action="version", version=f"{version.PROJECT_NAME_TEXT} {version.VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    command = commands.add_parser("simulate", parents=[common], help="simulate one fingerprint")
    _scheduleArgs(command)
    command.add_argument("--tissue", nargs="+", required=True, metavar="NAME=VALUE",
                         help="kmw (Hz), m0m (fraction), t2m (s), t1w (s)")
    command.add_argument("--snr-db", type=float, help="add white noise at this SNR")

    command = commands.add_parser("gendata", parents=[common], help="generate a training dataset")
    command.add_argument("--n-samples", type=int)
    command.add_argument("--workers", type=int)
    command.add_argument("--export-csv", type=int, metavar="LIMIT", help="also export the first LIMIT records as CSV")

    command = commands.add_parser("train", parents=[common], help="train the bi-LSTM estimator")
    command.add_argument("--dataset", required=True)
    command.add_argument("--max-epochs", type=int)

    command = commands.add_parser("transfer", parents=[common], help="fine-tune a model on one schedule")
    command.add_argument("--model", required=True)
    _scheduleArgs(command)
    command.add_argument("--n-samples", type=int)

    command = commands.add_parser("fcnn", parents=[common], help="train the fixed-schedule baseline")
    _scheduleArgs(command)
    command.add_argument("--n-samples", type=int)
    command.add_argument("--max-epochs", type=int)

    command = commands.add_parser("fit", parents=[common], help="Bloch-fit one fingerprint")
    command.add_argument("--fingerprint", help="fingerprint CSV written by 'simulate'")
    _scheduleArgs(command, required=False)
    command.add_argument("--tissue", nargs="+", metavar="NAME=VALUE", help="simulate this tissue, then fit it")
    command.add_argument("--snr-db", type=float)

    command = commands.add_parser("eval", parents=[common], help="evaluate estimators on the digital phantoms")
    _scheduleArgs(command, multiple=True, required=False)
    command.add_argument("--methods", nargs="+", choices=phantom.METHODS)
    command.add_argument("--model", help="trained bi-LSTM for 'otom' and 'otomT'")
    command.add_argument("--fcnn-model", action="append", default=[], help="FCNN weights, one per schedule")
    command.add_argument("--noiseless", action="store_true")
    command.add_argument("--workers", type=int)

    command = commands.add_parser("export-map", parents=[common], help="render a report map as a PGM image")
    command.add_argument("--report", required=True)
    command.add_argument("--map", required=True, help="e.g. kmw, t1w_truth or m0m_diff")
    command.add_argument("--window", nargs=2, type=float, metavar=("LOW", "HIGH"))
    return parser


def _schedule(args) -> schedule.Schedule:
    if args.fixture is not None:
        return schedule.loadFixtureSchedule(args.fixture)
    return schedule.loadSchedule(_inputPath(args.schedule, "schedule file"))


def _schedules(args, config) -> list[schedule.Schedule]:
    if args.schedule:
        return [schedule.loadSchedule(_inputPath(item, "schedule file")) for item in args.schedule]
    return [schedule.loadFixtureSchedule(n) for n in (args.fixture or config["eval"]["fixtures"])]


def _noise(snr_db) -> dataset.NoiseSpec | None:
    return None if snr_db is None else dataset.NoiseSpec(snr_db)


def _workers(args, config_value: int) -> int:
    return 1 if args.deterministic else (args.workers if getattr(args, "workers", None) else config_value)


def _summaryFloats(values: dict) -> dict:
    return {key: None if isinstance(value, float) and math.isnan(value) else value for key, value in values.items()}


def cmdSimulate(args, config, out_dir: str) -> dict:
    sched = _schedule(args)
    tissue = parseTissue(args.tissue)
    consts = bloch.PoolConstants.fromConfig(config["bloch"])
    signal = bloch.simulateFingerprint(tissue, consts, sched)
    if args.snr_db is not None:
        signal = dataset.addNoise(signal, dataset.NoiseSpec(args.snr_db), args.seed or 0)
    saveFingerprint(joinPath(out_dir, FINGERPRINT_CSV), sched, signal)
    return {"schedule": sched.name, "n_scans": len(sched), "tissue": tissue.toJson(), "snr_db": args.snr_db,
            "output": FINGERPRINT_CSV}


def cmdGenData(args, config, out_dir: str) -> dict:
    data_config = dataset.DatasetConfig.fromConfig(config, n_samples=args.n_samples)
    filename = config["dataset"]["filename"]
    out_path = joinPath(out_dir, filename)
    started = time.perf_counter()
    manifest = dataset.generateDataset(data_config, out_path, _workers(args, config["dataset"]["workers"]),
                                       args.deterministic)
    summary = {"dataset": filename, "n_samples": data_config.n_samples, "digest": manifest.get("digest"),
               "timings": {"generate": time.perf_counter() - started}}
    if args.export_csv:
        summary["csv_rows"] = dataset.exportDatasetCsv(out_path, joinPath(out_dir, "dataset.csv"), args.export_csv)
    return summary


def cmdTrain(args, config, out_dir: str) -> dict:
    reader = dataset.DatasetReader(_inputPath(args.dataset, "dataset"))
    data = reader.readAll()
    train_config = neural.TrainConfig.fromConfig(config["train"], max_epochs=args.max_epochs)
    model = neural.BiLstmModel(config["model"]["layers"], config["model"]["hidden"],
                               normalization=reader.normalization, seed=train_config.seed)
    model, history = neural.train(model, data, train_config)
    neural.saveModel(model, joinPath(out_dir, MODEL_FILE), history)
    return {"model": MODEL_FILE, "parameters": model.parameterCount(), "records": len(data),
            "best_epoch": history.best_epoch, "best_loss": history.best_loss, "epochs": len(history.epochs),
            "stopped_early": history.stopped_early, "timings": {"train": history.seconds}}


def cmdTransfer(args, config, out_dir: str) -> dict:
    model = neural.loadModel(_inputPath(args.model, "model"))
    if not isinstance(model, neural.BiLstmModel):
        raise ConfigError(f"Transfer learning needs a bi-LSTM model, '{args.model}' holds a {model.kind}")
    sched = _schedule(args)
    transfer_config = neural.TransferConfig.fromConfig(config["transfer"], n_samples=args.n_samples)
    tuned, history = neural.transferTrain(model, sched, transfer_config, dataset.DatasetConfig.fromConfig(config))
    neural.saveModel(tuned, joinPath(out_dir, TRANSFER_MODEL_FILE), history)
    return {"model": TRANSFER_MODEL_FILE, "schedule": sched.name, "n_samples": transfer_config.n_samples,
            "final_loss": history.epochs[-1]["train_loss"] if history.epochs else None,
            "timings": {"transfer": history.seconds}}


def cmdFcnn(args, config, out_dir: str) -> dict:
    sched = _schedule(args)
    section = config["fcnn"]
    data_config = dataset.DatasetConfig.fromConfig(config, seed=section["seed"])
    n_samples = args.n_samples or section["n_samples"]
    started = time.perf_counter()
    samples = dataset.generateSamples(data_config, schedule=sched, n_samples=n_samples)
    train_config = neural.TrainConfig.fromConfig(config["train"], seed=section["seed"],
                                                 max_epochs=args.max_epochs or section["max_epochs"])
    model, history = neural.fcnnTrain(samples, sched, train_config, tuple(section["hidden"]),
                                      data_config.normalization)
    neural.saveModel(model, joinPath(out_dir, FCNN_MODEL_FILE), history)
    return {"model": FCNN_MODEL_FILE, "schedule": sched.name, "n_samples": n_samples,
            "best_epoch": history.best_epoch, "best_loss": history.best_loss,
            "timings": {"fcnn": time.perf_counter() - started}}


def cmdFit(args, config, out_dir: str) -> dict:
    fit_config = fit.FitConfig.fromConfig(config)
    truth = None
    if args.fingerprint:
        sched, signal = loadFingerprint(_inputPath(args.fingerprint, "fingerprint file"))
    elif args.tissue and (args.schedule or args.fixture is not None):
        sched = _schedule(args)
        truth = parseTissue(args.tissue)
        signal = bloch.simulateFingerprint(truth, fit_config.consts, sched)
        if args.snr_db is not None:
            signal = dataset.addNoise(signal, dataset.NoiseSpec(args.snr_db), fit_config.seed)
    else:
        raise ConfigError("'fit' needs --fingerprint, or a schedule together with --tissue")

    result = fit.fitBloch(signal, sched, fit_config)
    document = {"schedule": sched.name, "result": result.toJson(),
                "truth": None if truth is None else truth.toJson()}
    save(joinPath(out_dir, FIT_FILE), document)
    print(" ".join(f"{name}={value:.6g}" for name, value in zip(bloch.PARAM_NAMES, result.params.toArray())))
    return {"output": FIT_FILE, **{key: document["result"][key] for key in
                                   ("params", "residual_rms", "iterations", "converged", "start_index")}}


def _fcnnModels(paths: list[str]) -> list[neural.FcnnModel]:
    models = [neural.loadModel(_inputPath(item, "FCNN model")) for item in paths]
    for item, model in zip(paths, models):
        if not isinstance(model, neural.FcnnModel):
            raise ConfigError(f"'{item}' does not hold an FCNN model")
    return models


def _fcnnFor(models: list[neural.FcnnModel], sched: schedule.Schedule) -> neural.FcnnModel:
    for model in models:
        try:
            model.checkSchedule(sched)
            return model
        except DomainError:
            continue
    raise ConfigError(f"No FCNN model bound to schedule '{sched.name}' was given")


def cmdEval(args, config, out_dir: str) -> dict:
    section = config["eval"]
    methods = list(dict.fromkeys(args.methods or section["methods"]))
    model = None
    if {"otom", "otomT"} & set(methods):
        if not args.model:
            raise ConfigError("Methods 'otom' and 'otomT' need --model")
        model = neural.loadModel(_inputPath(args.model, "model"))
    fcnn_models = _fcnnModels(args.fcnn_model)
    if "fcnn" in methods and not fcnn_models:
        raise ConfigError("Method 'fcnn' needs at least one --fcnn-model")

    schedules = _schedules(args, config)
    data_config = dataset.DatasetConfig.fromConfig(config)
    fit_config = fit.FitConfig.fromConfig(config)
    transfer_config = neural.TransferConfig.fromConfig(config["transfer"])
    noise = None if (args.noiseless or section["noiseless"]) else data_config.noise
    phantoms = phantom.buildPhantoms(config["phantom"]["seed"], config["phantom"]["width"],
                                     config["phantom"]["height"], data_config.tissue_ranges)
    reports_dir = makePath(out_dir, REPORTS_DIR)
    workers = _workers(args, config["fit"]["workers"])

    reports = []
    agreement = {}
    timings = {"transfer": {}, "evaluate": {}}
    for sched in schedules:
        estimators = {}
        for method in methods:
            if method == "otom":
                estimators[method] = model
            elif method == "otomT":
                estimators[method], history = neural.transferTrain(model, sched, transfer_config, data_config)
                timings["transfer"][sched.name] = history.seconds
            elif method == "fcnn":
                estimators[method] = _fcnnFor(fcnn_models, sched)
            else:
                estimators[method] = None

        for name, item in phantoms.items():
            fingerprints = phantom.simulatePhantom(item, sched, noise, section["seed"], data_config.consts)
            by_method = {}
            for method in methods:
                report = phantom.evaluate(method, item, sched, estimators[method], fit_config,
                                          fingerprints=fingerprints, workers=workers, deterministic=args.deterministic)
                phantom.saveReport(report, joinPath(reports_dir, f"{sched.name}_{method}_{name}.json"))
                timings["evaluate"][f"{sched.name}/{method}/{name}"] = report.runtime
                reports.append(report)
                by_method[method] = report
            for first, second in itertools.combinations(methods, 2):
                agreement[f"{sched.name}/{name}/{first}-{second}"] = {
                    param: _summaryFloats(values)
                    for param, values in phantom.compareReports(by_method[first], by_method[second]).items()}

    table = phantom.maeTable(reports, joinPath(out_dir, MAE_TABLE))
    _logger.info(f"MAE table:\n{table}")
    return {"mae_table": MAE_TABLE, "reports": REPORTS_DIR, "methods": methods,
            "schedules": [sched.name for sched in schedules], "noiseless": noise is None,
            "mae": [{"schedule": report.schedule, "method": report.method, "phantom": report.phantom,
                     **report.mae} for report in reports],
            "correlation": [{"schedule": report.schedule, "method": report.method, "phantom": report.phantom,
                             **_summaryFloats(report.correlation)} for report in reports],
            "agreement": agreement, "timings": timings}


def cmdExportMap(args, config, out_dir: str) -> dict:
    report = phantom.loadReport(_inputPath(args.report, "report"))
    param, _, kind = args.map.partition("_")
    if args.map not in report.mapNames():
        raise DomainError(f"Unknown map '{args.map}', expected one of {report.mapNames()}")
    if report.estimates is None:
        raise ConfigError(f"Report '{args.report}' carries no maps")

    window = tuple(args.window) if args.window else None
    if window is None and kind != "diff":
        window = config["export"]["windows"].get(param)
    out_name = f"{args.map}.pgm"
    window = images.exportMap(report, args.map, joinPath(out_dir, out_name), window)
    return {"image": out_name, "map": args.map, "window": list(window)}


COMMANDS = {"simulate": cmdSimulate, "gendata": cmdGenData, "train": cmdTrain, "transfer": cmdTransfer,
            "fcnn": cmdFcnn, "fit": cmdFit, "eval": cmdEval, "export-map": cmdExportMap}


def _applySeed(args, config):
    section = SEED_SECTIONS.get(args.command)
    if args.seed is not None and section and "seed" in config[section]:
        config.updateConfig({section: {"seed": args.seed}})


def main(argv: list[str] | None = None) -> int:
    """
    Run one command.

    :param argv: Arguments without the program name, None for sys.argv, should be a list[str] | None
    :return: exit code - int
    """
    parser = buildParser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_USAGE

    env = None
    try:
        env = loadEnv(args.config, out_dir=args.out_dir, command=args.command, log_file=args.log_file,
                      log_level=args.log_level)
        out_dir = env.out_dir
        _applySeed(args, env.config)

        _logger.info(f"{env}: running '{args.command}' into '{out_dir}'")
        started = time.perf_counter()
        summary = COMMANDS[args.command](args, env.config, out_dir)
        timings = {**summary.pop("timings", {}), "total": time.perf_counter() - started}
        summary = {"command": args.command, "deterministic": args.deterministic, "version": version.VERSION,
                   "timings": TIMINGS, **summary}

        env.config.saveJson(out_dir, RESOLVED_CONFIG)
        save(joinPath(out_dir, SUMMARY), summary)
        save(joinPath(out_dir, TIMINGS), timings)
        return EXIT_OK
    except (DomainError, ConfigError) as e:
        _logger.error(e.message)
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    except (OtomError, ArithmeticError, OSError, ValueError) as e:
        _logger.error(f"'{args.command}' failed: {e}")
        print(f"error: {getattr(e, 'message', e)}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if env is not None:
            env.close()
