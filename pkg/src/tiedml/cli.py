"""Command-line front end: experiment orchestration, configuration parsing,
seeding, and report emission.

One tool with subcommand groups:

* ``tiedml run EXPERIMENT``  -- the wired-up verification experiments
* ``tiedml renewal CMD``     -- direct access to the exact renewal engine
* ``tiedml lsv CMD``         -- direct access to the interval-map engine

Every invocation writes its artifacts under the output directory (flag
``--out``, else ``$TIEDML_OUT``, else ``./tiedml-out``) together with a
manifest listing files and their SHA-256 hashes.  Artifacts are written to a
temporary name and renamed into place, so failures never leave partial
outputs.  Exit status: 0 when every report passes, 1 when a comparison
fails, 2 on usage or configuration errors, 3 on numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, paths, processes, renewal
from .paths import FactorFunction, ProductFunctional
from .stats import ComparisonReport, mean_report

EXPERIMENTS = (
    "ml-moments",
    "prop-c",
    "prop-d",
    "prop-e",
    "umbrella-renewal",
    "umbrella-lsv",
    "srt",
    "llt",
    "cor7",
    "paths-selftest",
)

USAGE_EXIT = 2
NUMERIC_EXIT = 3


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    gamma: float = 0.5
    lifetime: str = "zeta:0.5"
    n: int = 1024
    big_n: int = 400
    samples: int = 20_000
    resolution: float = 500.0
    seed: int = 0
    threads: int = 1
    epsilon: float = 1e-6
    pf: str = "0.5~exp:1|exp:1"
    out: str = ""

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS and self.experiment != "":
            raise UsageError(f"unknown experiment {self.experiment!r}")
        if self.n < 1 or self.big_n < 1 or self.samples < 1:
            raise UsageError("n, big-n and samples must be positive")
        if not 0 < self.resolution:
            raise UsageError("resolution must be positive")
        if not 0 < self.epsilon < 1:
            raise UsageError("epsilon must lie in (0, 1)")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if not self.out:
            self.out = os.environ.get("TIEDML_OUT", "tiedml-out")

    @staticmethod
    def from_sources(experiment: str, config_path: str | None, flag_values: dict) -> "ExperimentConfig":
        """Build from an optional JSON config file with flags overriding."""
        merged: dict = {}
        if config_path:
            with open(config_path) as fh:
                file_cfg = json.load(fh)
            if not isinstance(file_cfg, dict):
                raise UsageError("config file must hold a JSON object")
            known = {f.name for f in dataclasses.fields(ExperimentConfig)}
            unknown = set(file_cfg) - known
            if unknown:
                raise UsageError(f"unknown config keys: {sorted(unknown)}")
            merged.update(file_cfg)
        merged.update({k: v for k, v in flag_values.items() if v is not None})
        merged["experiment"] = experiment or merged.get("experiment", "")
        return ExperimentConfig(**merged)


def parse_product_functional(text: str) -> ProductFunctional:
    """Parse 'T~FACTOR[,T~FACTOR...]|TERMINAL', e.g. '0.5~exp:1|power:2'."""
    body, _, term = text.partition("|")
    if not term:
        raise UsageError("product functional needs a terminal part after '|'")
    times, factors = [], []
    for piece in body.split(","):
        t_txt, _, f_txt = piece.partition("~")
        times.append(float(t_txt))
        factors.append(FactorFunction.parse(f_txt))
    return ProductFunctional(tuple(times), tuple(factors), FactorFunction.parse(term))


# -- artifact handling ---------------------------------------------------------


def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_artifacts(out_dir: str, artifacts: dict[str, str]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    digest = {}
    for name in sorted(artifacts):
        body = artifacts[name]
        _atomic_write(os.path.join(out_dir, name), body)
        digest[name] = hashlib.sha256(body.encode()).hexdigest()
    manifest = json.dumps({"artifacts": digest}, indent=2, sort_keys=True)
    _atomic_write(os.path.join(out_dir, "manifest.json"), manifest)


def _reports_artifact(reports: list[ComparisonReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)


# -- experiment implementations -------------------------------------------------


def _exp_ml_moments(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    reports = []
    for i, g in enumerate((cfg.gamma,)):
        xs = processes.sample_ml_marginals(g, cfg.samples, cfg.resolution, cfg.seed + i)
        m1, se1 = mean_report(xs)
        reports.append(
            ComparisonReport(
                "ml-moments-mean",
                {"gamma": g, "samples": cfg.samples, "resolution": cfg.resolution},
                m1, se1, 1.0, 0.0, 0.0, z=3.0, n_lhs=cfg.samples, seed=cfg.seed + i,
            )
        )
        m2, se2 = mean_report(xs**2)
        reports.append(
            ComparisonReport(
                "ml-moments-p2",
                {"gamma": g, "samples": cfg.samples, "resolution": cfg.resolution},
                m2, se2, processes.ml_moment(g, 2), 0.0, 0.0, z=4.0,
                n_lhs=cfg.samples, seed=cfg.seed + i,
            )
        )
    return reports, {}


def _exp_prop_c(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    reports = []
    for i, h in enumerate((FactorFunction.parse("exp:1"), FactorFunction.parse("power:1"))):
        reports.append(
            processes.estimate_propC(
                cfg.gamma, h, cfg.samples, cfg.resolution, cfg.epsilon, cfg.seed + i
            )
        )
    return reports, {}


def _exp_prop_d(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    pfs = [parse_product_functional(cfg.pf),
           parse_product_functional("0.25~power:1,0.6~exp:0.5|power:2")]
    reports = [
        processes.estimate_propD(cfg.gamma, pf, cfg.samples, cfg.resolution, cfg.seed + i)
        for i, pf in enumerate(pfs)
    ]
    return reports, {}


def _tied_reference(cfg: ExperimentConfig, pf: ProductFunctional) -> tuple[float, float, int]:
    rng = np.random.default_rng(cfg.seed + 977)
    w, _ = processes._tied_rows(
        cfg.gamma, cfg.samples, 1.0 / cfg.resolution, rng, list(pf.times)
    )
    vals = np.ones(w.shape[0])
    for j, f in enumerate(pf.factors):
        vals *= f(w[:, j])
    vals *= pf.terminal(w[:, -1] - w[:, len(pf.times) - 1])
    est, se = mean_report(vals)
    return est, se, w.shape[0]


def _exp_prop_e(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    pf = parse_product_functional(cfg.pf)
    lifetime = renewal.parse_lifetime(cfg.lifetime, n_max=max(10 * cfg.big_n, 1000))
    tables = renewal.renewal_sequence(lifetime, cfg.big_n)
    exact = renewal.tied_down_exact(lifetime, cfg.big_n, pf, tables=tables)
    ref, ref_se, n_ref = _tied_reference(cfg, pf)
    report = ComparisonReport(
        "prop-e",
        {
            "gamma": cfg.gamma,
            "lifetime": cfg.lifetime,
            "N": cfg.big_n,
            "pf": pf.describe(),
            "samples": cfg.samples,
        },
        exact, 0.0, ref, ref_se, 0.05 * abs(ref), z=3.0,
        n_rhs=n_ref, seed=cfg.seed,
    )
    return [report], {}


def _exp_umbrella_renewal(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    pf = parse_product_functional(cfg.pf)
    lifetime = renewal.parse_lifetime(cfg.lifetime, n_max=max(10 * cfg.big_n, 1000))
    tables = renewal.renewal_sequence(lifetime, cfg.big_n)
    cesaro = renewal.cesaro_tied_down(lifetime, cfg.big_n, pf, tables=tables)
    ref, ref_se, n_ref = _tied_reference(cfg, pf)
    report = ComparisonReport(
        "umbrella-renewal",
        {
            "gamma": cfg.gamma,
            "lifetime": cfg.lifetime,
            "N": cfg.big_n,
            "pf": pf.describe(),
            "samples": cfg.samples,
        },
        cesaro, 0.0, ref, ref_se, 0.1 * abs(ref), z=3.0,
        n_rhs=n_ref, seed=cfg.seed,
    )
    return [report], {}


def _exp_srt(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    lifetime = renewal.parse_lifetime(cfg.lifetime, n_max=max(10 * cfg.n, 1000))
    tables = renewal.renewal_sequence(lifetime, cfg.n)
    report_rows = ["n,u,a,c,ratio"]
    reports = []
    marks = [m for m in (cfg.n // 100, cfg.n // 10, cfg.n) if m >= 1]
    for m in marks:
        r = renewal.srt_ratio(tables, m, cfg.gamma)
        report_rows.append(
            f"{m},{float(tables.u[m])!r},{float(tables.a[m])!r},"
            f"{float(tables.c[m])!r},{r.ratio!r}"
        )
        reports.append(
            ComparisonReport(
                "srt",
                {"lifetime": cfg.lifetime, "gamma": cfg.gamma, "n": m},
                r.ratio, 0.0, 1.0, 0.0, 0.1, z=0.0,
                extra={"doney_bound": r.doney_bound, "in_regime": r.in_regime},
            )
        )
    return reports, {"srt_tables.csv": "\n".join(report_rows) + "\n"}


def _exp_llt(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    lifetime = renewal.parse_lifetime(cfg.lifetime, n_max=10)
    # the window top fixes the support the exact convolutions need
    b_n = renewal.tail_scaling(lifetime, cfg.gamma, cfg.n)
    n_max = int(3.0 * b_n) + 8
    lifetime = renewal.parse_lifetime(cfg.lifetime, n_max=n_max)
    span, _ = lifetime.span_and_residue()
    if span == 1:
        rep = renewal.llt_check(lifetime, cfg.gamma, cfg.n)
    else:
        rep = renewal.llt_check_arithmetic(lifetime, cfg.gamma, cfg.n)
    return [rep], {}


def _exp_cor7(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    lifetime = renewal.parse_lifetime(cfg.lifetime, n_max=max(cfg.big_n, 1000))
    g = FactorFunction.parse("exp:1")
    ns = sorted({max(cfg.big_n // 4, 1), max(cfg.big_n // 2, 1), cfg.big_n})
    vals = renewal.corollary7_values(lifetime, ns, g)
    reports = []
    for prev, cur in zip(ns, ns[1:]):
        reports.append(
            ComparisonReport(
                "cor7-decreasing",
                {"lifetime": cfg.lifetime, "from": prev, "to": cur},
                vals[cur], 0.0, 0.0, 0.0, vals[prev], z=0.0,
                extra={"values": {str(k): v for k, v in vals.items()}},
            )
        )
    return reports, {}


def _exp_umbrella_lsv(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    pf = parse_product_functional(cfg.pf)
    system = dynamics.ulam_density(cfg.gamma)
    tables = dynamics.empirical_return_sequence(
        cfg.gamma, cfg.n, max(2000, cfg.samples), cfg.seed + 1, system
    )
    ref, ref_se, _ = _tied_reference(cfg, pf)
    rep = dynamics.verify_umbrella_mc(
        cfg.gamma, cfg.n, cfg.samples, pf, cfg.seed, system, tables, (ref, ref_se)
    )
    arts = {"lsv_density.csv": system.density_csv()}
    return [rep], arts


def _exp_paths_selftest(cfg: ExperimentConfig) -> tuple[list[ComparisonReport], dict]:
    counts = paths.run_selftest(n_paths=cfg.samples, seed=cfg.seed)
    report = ComparisonReport(
        "paths-selftest",
        {"n_paths": cfg.samples, "seed": cfg.seed},
        1.0, 0.0, 1.0, 0.0, 0.0, z=0.0,
        extra={"checked": counts},
    )
    return [report], {}


_RUNNERS = {
    "ml-moments": _exp_ml_moments,
    "prop-c": _exp_prop_c,
    "prop-d": _exp_prop_d,
    "prop-e": _exp_prop_e,
    "umbrella-renewal": _exp_umbrella_renewal,
    "umbrella-lsv": _exp_umbrella_lsv,
    "srt": _exp_srt,
    "llt": _exp_llt,
    "cor7": _exp_cor7,
    "paths-selftest": _exp_paths_selftest,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one experiment, write artifacts, return the exit status."""
    reports, artifacts = _RUNNERS[cfg.experiment](cfg)
    artifacts = dict(artifacts)
    artifacts["report.json"] = _reports_artifact(reports)
    artifacts["config.json"] = json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True)
    write_artifacts(cfg.out, artifacts)
    for r in reports:
        print(r.one_line())
    return 0 if all(r.passed for r in reports) else 1


# -- direct engine subcommands ---------------------------------------------------


def _renewal_cmd(cmd: str, cfg: ExperimentConfig) -> int:
    lifetime = renewal.parse_lifetime(cfg.lifetime, n_max=max(10 * max(cfg.n, cfg.big_n), 1000))
    artifacts: dict[str, str] = {}
    summary: dict = {"command": cmd, "lifetime": cfg.lifetime}
    status = 0
    if cmd == "tables":
        tables = renewal.renewal_sequence(lifetime, cfg.n)
        rows = ["n,u,a,c"]
        for m in range(cfg.n + 1):
            rows.append(f"{m},{float(tables.u[m])!r},{float(tables.a[m])!r},{float(tables.c[m])!r}")
        artifacts["renewal_tables.csv"] = "\n".join(rows) + "\n"
        if lifetime.gamma is not None:
            summary["karamata_ratio"] = tables.karamata_ratio(cfg.n)
    elif cmd == "srt":
        reports, artifacts = _exp_srt(cfg)
        status = 0 if all(r.passed for r in reports) else 1
        artifacts["report.json"] = _reports_artifact(reports)
    elif cmd == "llt":
        reports, artifacts = _exp_llt(cfg)
        status = 0 if all(r.passed for r in reports) else 1
        artifacts["report.json"] = _reports_artifact(reports)
    elif cmd == "tieddown":
        pf = parse_product_functional(cfg.pf)
        summary["value"] = renewal.tied_down_exact(lifetime, cfg.big_n, pf)
        summary["N"] = cfg.big_n
    elif cmd == "cesaro":
        pf = parse_product_functional(cfg.pf)
        summary["value"] = renewal.cesaro_tied_down(lifetime, cfg.big_n, pf)
        summary["N"] = cfg.big_n
    elif cmd == "cor7":
        vals = renewal.corollary7_values(lifetime, [cfg.big_n], FactorFunction.parse("exp:1"))
        summary["value"] = vals[cfg.big_n]
        summary["N"] = cfg.big_n
    else:
        raise UsageError(f"unknown renewal command {cmd!r}")
    artifacts.setdefault("summary.json", json.dumps(summary, indent=2, sort_keys=True))
    write_artifacts(cfg.out, artifacts)
    if "value" in summary:
        print(f"{cmd}: {summary['value']}")
    return status


def _lsv_cmd(cmd: str, cfg: ExperimentConfig) -> int:
    artifacts: dict[str, str] = {}
    status = 0
    if cmd == "density":
        system = dynamics.ulam_density(cfg.gamma)
        artifacts["lsv_density.csv"] = system.density_csv()
        artifacts["summary.json"] = json.dumps(
            {"residual": system.residual, "gamma": cfg.gamma}, indent=2, sort_keys=True
        )
    elif cmd == "returns":
        tables = dynamics.empirical_return_sequence(cfg.gamma, cfg.n, cfg.samples, cfg.seed)
        rows = ["k,u_hat,a_hat"]
        for k in range(cfg.n + 1):
            rows.append(f"{k},{float(tables.u[k])!r},{float(tables.a[k])!r}")
        artifacts["lsv_returns.csv"] = "\n".join(rows) + "\n"
    elif cmd == "umbrella":
        reports, artifacts = _exp_umbrella_lsv(cfg)
        status = 0 if all(r.passed for r in reports) else 1
        artifacts["report.json"] = _reports_artifact(reports)
        for r in reports:
            print(r.one_line())
    else:
        raise UsageError(f"unknown lsv command {cmd!r}")
    write_artifacts(cfg.out, artifacts)
    return status


# -- argument parsing --------------------------------------------------------------


def _add_common_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--lifetime", type=str, default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--big-n", dest="big_n", type=int, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--resolution", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--pf", type=str, default=None)
    sp.add_argument("--out", type=str, default=None)
    sp.add_argument("--config", type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiedml",
        description="Verification experiments for tied-down occupation-time limits",
    )
    sub = parser.add_subparsers(dest="group", required=True)

    p_run = sub.add_parser("run", help="run a wired-up experiment")
    p_run.add_argument("experiment", choices=EXPERIMENTS)
    _add_common_flags(p_run)

    p_ren = sub.add_parser("renewal", help="exact renewal-engine commands")
    p_ren.add_argument("command", choices=("tables", "srt", "llt", "tieddown", "cesaro", "cor7"))
    _add_common_flags(p_ren)

    p_lsv = sub.add_parser("lsv", help="interval-map commands")
    p_lsv.add_argument("command", choices=("density", "returns", "umbrella"))
    _add_common_flags(p_lsv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flag_values = {
        k: getattr(args, k)
        for k in (
            "gamma", "lifetime", "n", "big_n", "samples", "resolution",
            "seed", "threads", "epsilon", "pf", "out",
        )
    }
    try:
        if args.group == "run":
            cfg = ExperimentConfig.from_sources(args.experiment, args.config, flag_values)
            return run(cfg)
        cfg = ExperimentConfig.from_sources("", args.config, flag_values)
        if args.group == "renewal":
            return _renewal_cmd(args.command, cfg)
        return _lsv_cmd(args.command, cfg)
    except (UsageError, renewal.ConfigurationError, processes.ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (processes.NumericError,) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
