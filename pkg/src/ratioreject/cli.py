"""Command-line interface and the end-to-end rejection pipeline.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric solver
failure (including unmet solver preconditions).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import _kernels
from .calibration import CalibrationModel, apply_temperature, fit_temperature
from .divergences import DiscreteDistribution
from .errors import ConfigError, DataError, PreconditionError, RatioRejectError
from .evaluation import (
    SyntheticTask,
    check_chi2_bound,
    check_kl_bound,
    generate_synthetic,
    select_tau_for_coverage,
    sweep,
)
from .io import as_arrays, ingest, write_json, write_predictions, write_sweep
from .losses import LOSS_KINDS, LossKind, pointwise_risk_plugin
from .rejectors import (
    KINDS,
    DensityRatioRejector,
    DroConfig,
    RejectorSpec,
    dro_dual_search,
    fit,
    ratio_grid,
)

EXIT_OK = 0


@dataclass
class RunConfig:
    """Pipeline settings; field names double as config-file keys."""

    kind: str = "kl"
    alpha: float | None = None
    lam: float = 1.0
    loss: str = "zero_one"
    n_taus: int = 50
    taus: list | None = None
    calibrate: bool = False
    fit_path: str | None = None
    eval_path: str | None = None
    calibration_path: str | None = None
    format: str | None = None
    score_type: str = "probs"
    output_dir: str = "out"
    seed: int = 0
    target_coverage: float | None = None
    synthetic: dict | None = None

    def validate(self):
        self.spec()
        LossKind(self.loss)
        if self.score_type not in ("probs", "logits"):
            raise ConfigError(f"score_type must be probs or logits, got {self.score_type!r}")
        if self.taus is None and self.n_taus < 1:
            raise ConfigError("n_taus must be positive")
        if self.taus is not None and not all(0.0 < t <= 1.0 for t in self.taus):
            raise ConfigError("every tau must lie in (0, 1]")
        if self.target_coverage is not None and not 0.0 < self.target_coverage <= 1.0:
            raise ConfigError("target_coverage must lie in (0, 1]")
        if self.synthetic is None:
            if not self.fit_path or not self.eval_path:
                raise ConfigError("fit_path and eval_path are required without a synthetic section")
            if self.calibrate:
                if self.score_type != "logits":
                    raise ConfigError("calibration needs score_type = logits")
                if not self.calibration_path:
                    raise ConfigError("calibrate = true needs calibration_path")
                paths = {Path(self.calibration_path).resolve()}
                if Path(self.fit_path).resolve() in paths or Path(self.eval_path).resolve() in paths:
                    raise ConfigError("the calibration file must differ from the fit and eval files")
        else:
            unknown = set(self.synthetic) - set(_SYNTH_DEFAULTS)
            if unknown:
                raise ConfigError(f"unknown synthetic keys {sorted(unknown)}")

    def spec(self) -> RejectorSpec:
        return RejectorSpec(self.kind, self.lam, self.alpha)

    def tau_grid(self) -> np.ndarray:
        return np.asarray(self.taus, dtype=float) if self.taus is not None else ratio_grid(self.n_taus)


_SYNTH_DEFAULTS = dict(support=200, classes=2, n_fit=5000, n_eval=5000, n_cal=5000, noise=0.0)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


def _synthetic_splits(cfg: RunConfig):
    s = {**_SYNTH_DEFAULTS, **cfg.synthetic}
    task = SyntheticTask.random(int(s["support"]), int(s["classes"]), seed=cfg.seed, noise=s["noise"])
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    out = {}
    for name, n, ss, noise in (("fit", s["n_fit"], seeds[0], s["noise"]),
                               ("eval", s["n_eval"], seeds[1], 0.0),
                               ("cal", s["n_cal"], seeds[2], 0.0)):
        sample = generate_synthetic(task, int(n), seed=ss, noise=noise)
        post = task.posterior[sample.points]
        scores = np.log(np.maximum(post, 1e-300)) if cfg.score_type == "logits" else post
        ids = [f"{name}-{i}" for i in range(int(n))]
        out[name] = (ids, sample.labels, scores)
    return out


def _to_probs(scores, score_type, calibration):
    if score_type == "probs":
        return scores
    return apply_temperature(calibration.temperature if calibration else 1.0, scores)


def run_pipeline(cfg: RunConfig) -> dict:
    """Calibrate (optional), compute plugin risk, fit, sweep, write artifacts.

    Writes ``sweep.csv`` and ``run.json`` into ``cfg.output_dir`` and returns
    the sidecar contents.
    """
    cfg.validate()
    spec = cfg.spec()
    loss = LossKind(cfg.loss)
    if cfg.synthetic is not None:
        splits = _synthetic_splits(cfg)
    else:
        splits = {"fit": as_arrays(ingest(cfg.fit_path, cfg.format, cfg.score_type)),
                  "eval": as_arrays(ingest(cfg.eval_path, cfg.format, cfg.score_type))}
        if cfg.calibrate:
            splits["cal"] = as_arrays(ingest(cfg.calibration_path, cfg.format, cfg.score_type))

    calibration = None
    if cfg.calibrate:
        if cfg.score_type != "logits":
            raise ConfigError("calibration needs score_type = logits")
        _, cal_labels, cal_scores = splits["cal"]
        if cal_labels is None:
            raise DataError("calibration file needs a label for every record")
        calibration = fit_temperature(cal_scores, cal_labels)

    fit_ids, _, fit_scores = splits["fit"]
    fit_probs = _to_probs(fit_scores, cfg.score_type, calibration)
    fit_risk = pointwise_risk_plugin(fit_probs, loss, fit_ids)
    rejector = fit(DiscreteDistribution.uniform(fit_ids), fit_risk, spec)

    eval_ids, eval_labels, eval_scores = splits["eval"]
    if eval_labels is None:
        raise DataError("evaluation file needs a label for every record to report accuracy")
    eval_probs = _to_probs(eval_scores, cfg.score_type, calibration)
    eval_risk = pointwise_risk_plugin(eval_probs, loss, eval_ids)
    rows = sweep(rejector, eval_risk, eval_labels, np.argmax(eval_probs, axis=1), cfg.tau_grid(),
                 point_losses=loss.realized(eval_probs, eval_labels))

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep(out / "sweep.csv", rows)
    sidecar = {
        "config": dataclasses.asdict(cfg),
        "rejector": rejector.to_dict(),
        "temperature": calibration.temperature if calibration else None,
        "calibration": dataclasses.asdict(calibration) if calibration else None,
        "seed": cfg.seed,
        "n_fit": len(fit_ids),
        "n_eval": len(eval_ids),
        "kernel_backend": _kernels.BACKEND,
    }
    if cfg.target_coverage is not None:
        sel = select_tau_for_coverage(rows, cfg.target_coverage)
        sidecar["target_coverage"] = dataclasses.asdict(sel)
    write_json(out / "run.json", sidecar)
    return sidecar


# subcommands -----------------------------------------------------------------

def _load_probs(args, calibration_t=None):
    ids, labels, scores = as_arrays(ingest(args.input, args.format, args.score_type))
    if args.score_type == "logits":
        scores = apply_temperature(calibration_t or 1.0, scores)
    return ids, labels, scores


def _cmd_run(args):
    sidecar = run_pipeline(load_config(args.config))
    print(json.dumps({"output_dir": sidecar["config"]["output_dir"],
                      "normalizer": sidecar["rejector"]["normalizer"]}))


def _cmd_synth(args):
    cfg = RunConfig(seed=args.seed, score_type=args.score_type, synthetic=dict(
        support=args.support, classes=args.classes, n_fit=args.n_fit, n_eval=args.n_eval,
        n_cal=args.n_cal, noise=args.noise))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "jsonl"
    for name, (ids, labels, scores) in _synthetic_splits(cfg).items():
        write_predictions(out / f"{name}.{ext}", ids, scores, labels)
    print(json.dumps({"out_dir": str(out), "files": [f"{n}.{ext}" for n in ("fit", "eval", "cal")]}))


def _cmd_calibrate(args):
    ids, labels, logits = as_arrays(ingest(args.input, args.format, "logits"))
    if labels is None:
        raise DataError("calibration needs a label for every record")
    model = fit_temperature(logits, labels)
    result = dataclasses.asdict(model)
    if args.out:
        write_json(args.out, result)
    print(json.dumps(result, sort_keys=True))


def _read_temperature(args):
    if getattr(args, "temperature", None) is None:
        return None
    t = args.temperature
    try:
        return float(t)
    except ValueError:
        with open(t, encoding="utf-8") as fh:
            return float(json.load(fh)["temperature"])


def _cmd_fit(args):
    ids, _, probs = _load_probs(args, _read_temperature(args))
    risk = pointwise_risk_plugin(probs, args.loss, ids)
    rej = fit(DiscreteDistribution.uniform(ids), risk, RejectorSpec(args.kind, args.lam, args.alpha))
    record = rej.to_dict() | {"loss": args.loss, "n_fit": len(ids)}
    if args.out:
        write_json(args.out, record)
    print(json.dumps(record, sort_keys=True))


def _load_rejector(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read rejector {path}: {exc}") from None
    return DensityRatioRejector.from_dict(d), d.get("loss", "zero_one")


def _eval_rows(args):
    rej, loss_name = _load_rejector(args.rejector)
    loss = LossKind(args.loss or loss_name)
    ids, labels, probs = _load_probs(args, _read_temperature(args))
    risk = pointwise_risk_plugin(probs, loss, ids)
    taus = ratio_grid(args.n_taus)
    if labels is None:
        return sweep(rej, risk, taus=taus)
    return sweep(rej, risk, labels, np.argmax(probs, axis=1), taus,
                 point_losses=loss.realized(probs, labels))


def _cmd_sweep(args):
    rows = _eval_rows(args)
    write_sweep(args.out or sys.stdout, rows)


def _cmd_target(args):
    sel = select_tau_for_coverage(_eval_rows(args), args.target)
    print(json.dumps(dataclasses.asdict(sel), sort_keys=True))


def _clean(obj):
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in obj.items()}


def _cmd_bounds(args):
    task = SyntheticTask.random(args.support, args.classes, seed=args.seed)
    check = check_kl_bound if args.theorem == "kl" else check_chi2_bound
    report = check(task, args.N, args.M, args.delta, args.lam, args.trials, seed=args.seed,
                   rate_base=args.rate_base, rate_trials=args.rate_trials)
    result = _clean(dataclasses.asdict(report))
    if args.out:
        write_json(args.out, result)
    print(json.dumps(result, sort_keys=True))
    return 1 if report.violated else 0


def _cmd_dro(args):
    ids, _, probs = _load_probs(args)
    risk = pointwise_risk_plugin(probs, args.loss, ids)
    res = dro_dual_search(DiscreteDistribution.uniform(ids), risk, args.alpha,
                          DroConfig(args.epsilon, (args.lam_min, args.lam_max)))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("id,weight\n")
            for rid, w in zip(res.adversarial.support_ids, res.adversarial.weights):
                fh.write(f"{rid},{w:.12g}\n")
    print(json.dumps({"lambda": res.lam, "dual_value": res.dual_value,
                      "divergence": res.divergence, "at_boundary": res.at_boundary}, sort_keys=True))
    if res.at_boundary:
        print(f"warning: optimum at the {res.at_boundary} end of the lambda range; widen it",
              file=sys.stderr)


def _add_input(p, score_type=True):
    p.add_argument("--input", required=True, help="prediction file (csv or jsonl)")
    p.add_argument("--format", choices=("csv", "jsonl"), help="default: from the file suffix")
    if score_type:
        p.add_argument("--score-type", choices=("probs", "logits"), default="probs")


def _add_rejector(p):
    p.add_argument("--kind", choices=KINDS, default="kl")
    p.add_argument("--alpha", type=float, help="alpha > 1 for --kind alpha")
    p.add_argument("--lam", type=float, default=1.0, help="regularization weight (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratioreject", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("synth", help="write synthetic fit/eval/calibration prediction files")
    p.add_argument("--support", type=int, default=200)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--n-fit", type=int, default=5000)
    p.add_argument("--n-eval", type=int, default=5000)
    p.add_argument("--n-cal", type=int, default=5000)
    p.add_argument("--noise", type=float, default=0.0, help="label flip rate on the fit split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score-type", choices=("probs", "logits"), default="probs")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate", help="fit a temperature on held-out logits")
    _add_input(p, score_type=False)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("fit", help="fit and save a density-ratio rejector")
    _add_input(p)
    _add_rejector(p)
    p.add_argument("--loss", choices=LOSS_KINDS, default="zero_one")
    p.add_argument("--temperature", help="temperature value or calibration JSON (logits only)")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_fit)

    for name, func, helptext in (("sweep", _cmd_sweep, "accuracy-coverage table over tau"),
                                 ("target-coverage", _cmd_target, "pick tau for a coverage")):
        p = sub.add_parser(name, help=helptext)
        _add_input(p)
        p.add_argument("--rejector", required=True, help="JSON written by `fit`")
        p.add_argument("--loss", choices=LOSS_KINDS, help="default: the loss the rejector was fit with")
        p.add_argument("--temperature")
        p.add_argument("--n-taus", type=int, default=50)
        if name == "sweep":
            p.add_argument("--out")
        else:
            p.add_argument("--target", type=float, required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("check-bounds", help="Monte-Carlo check of the ratio generalization bounds")
    p.add_argument("--theorem", choices=("kl", "chi2"), default="kl")
    p.add_argument("--support", type=int, default=10)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=400)
    p.add_argument("--rate-base", type=int, default=1000)
    p.add_argument("--rate-trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("dro", help="worst-case reweighting within a divergence ball")
    _add_input(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--lam-min", type=float, default=1e-3)
    p.add_argument("--lam-max", type=float, default=1e3)
    p.add_argument("--loss", choices=LOSS_KINDS, default="zero_one")
    p.add_argument("--out", help="CSV of adversarial weights")
    p.set_defaults(func=_cmd_dro)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except RatioRejectError as exc:
        extra = ""
        if isinstance(exc, PreconditionError) and exc.min_lambda is not None:
            extra = f" min_lambda={exc.min_lambda:.12g}"
        print(f"error code={exc.exit_code} type={type(exc).__name__}{extra}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error code={DataError.exit_code} type=OSError: {exc}", file=sys.stderr)
        return DataError.exit_code
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
