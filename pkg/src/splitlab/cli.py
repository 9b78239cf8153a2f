"""Command-line entry point: ``splitlab <suite> [options]``.

Exit codes: 0 when every check passes, 1 on any verification or statistical
failure, 2 on usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__, stats
from .families import (
    BracketFamily,
    JFamily,
    SplittingFamily,
    parse_chooser,
    parse_family,
    parse_rule,
)
from .report import CheckResult, RunReport, dumps, emit_report, load_report
from .sweeps import SUITES, replay_witness, run_suite

log = logging.getLogger("splitlab")

COMMANDS = tuple(SUITES) + ("split-stats", "arcsine", "factorize")
KS_COORDINATES = ("time", "endpoint", "min", "max", "n_positive")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    law: str = "gaussian:1"
    family: str | None = None
    rule: str | None = None
    chooser: str = "identity"
    tie_policy: str = "auto"
    p: list = field(default_factory=list)
    v: list = field(default_factory=lambda: [0.5, 0.9, 1.0])
    n: int = 10
    horizon: int = 12
    trials: int | None = None
    buffer: int = 4
    depth: int = 4
    alpha: float = 0.01
    permutations: int = 999
    indep_pairs: int = 500
    seed: int = 0
    workers: int = 1
    chunk_size: int = 2000
    max_witnesses: int = 10
    output: str | None = None
    dump_samples: str | None = None
    replay: str | None = None
    record_time: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.family is None:
            self.family = "bracket:identity" if self.command == "verify-roundtrip" else "argmin:identity"
        if self.rule is None and self.command == "verify-selfdual":
            self.rule = "ladder-down:identity"
        if not self.p:
            self.p = [0.2, 0.5] if self.command == "factorize" else [0.1, 0.3]
        if self.trials is None:
            self.trials = 100000 if self.command in ("split-stats", "arcsine", "factorize") else 10000
        self.validate()

    def validate(self):
        checks = [
            (self.tie_policy in ("auto", "flag", "earliest"), "tie_policy must be auto, flag or earliest"),
            (0 <= self.horizon <= 64, "horizon must lie in [0, 64]"),
            (self.trials >= 1, "trials must be positive"),
            (all(0 < p < 1 for p in self.p), "every p must lie in (0, 1)"),
            (all(0 < v <= 1 for v in self.v), "every v must lie in (0, 1]"),
            (self.n >= 0, "n must be nonnegative"),
            (self.buffer >= 0, "buffer must be nonnegative"),
            (0 <= self.depth <= self.buffer, "depth must lie in [0, buffer]"),
            (0 < self.alpha < 1, "alpha must lie in (0, 1)"),
            (self.permutations >= 99, "permutations must be at least 99"),
            (self.indep_pairs >= 2, "indep_pairs must be at least 2"),
            (self.workers >= 1, "workers must be positive"),
            (self.chunk_size >= 1, "chunk_size must be positive"),
            (self.max_witnesses >= 0, "max_witnesses must be nonnegative"),
            (0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            law = stats.parse_law(self.law)
            self.make_family(law)
            if self.rule is not None:
                parse_rule(self.rule)
            parse_chooser(self.chooser)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def law_obj(self) -> stats.IncrementLaw:
        return stats.parse_law(self.law)

    def resolved_tie_policy(self, law: stats.IncrementLaw) -> str:
        if self.tie_policy != "auto":
            return self.tie_policy
        return "flag" if law.diffuse else "earliest"

    def make_family(self, law: stats.IncrementLaw) -> SplittingFamily:
        if self.command == "verify-jconstruct":
            return JFamily(parse_chooser(self.chooser))
        return parse_family(self.family, self.resolved_tie_policy(law))

    def echo(self) -> dict:
        out = asdict(self)
        for key in ("output", "replay", "record_time", "workers"):
            out.pop(key)
        return out


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
LIST_FIELDS = ("p", "v")
INT_FIELDS = ("n", "horizon", "trials", "buffer", "depth", "permutations", "indep_pairs",
              "seed", "workers", "chunk_size", "max_witnesses")
FLOAT_FIELDS = ("alpha",)


def _coerce(key, raw):
    try:
        if key in LIST_FIELDS:
            if isinstance(raw, list):
                return [float(x) for x in raw]
            return [float(x) for x in str(raw).replace(",", " ").split()]
        if key in INT_FIELDS:
            return int(raw)
        if key in FLOAT_FIELDS:
            return float(raw)
        if key == "record_time":
            return raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    """Key/value pairs from the ``[splitlab]`` section of an INI-style file."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if set(parser.sections()) - {"splitlab"}:
        raise ConfigError(f"unknown sections in {path}: {sorted(set(parser.sections()) - {'splitlab'})}")
    out = {}
    if parser.has_section("splitlab"):
        for key, value in parser.items("splitlab"):
            name = key.replace("-", "_")
            if name not in FIELD_TYPES or name == "command":
                raise ConfigError(f"unknown config key {key!r}")
            out[name] = _coerce(name, value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"splitlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file with a [splitlab] section")
        sp.add_argument("--law")
        sp.add_argument("--family")
        sp.add_argument("--tie-policy", choices=("auto", "flag", "earliest"))
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--output", "-o", help="report path (default: stdout)")
        sp.add_argument("--record-time", action="store_true", default=None,
                        help="store wall time in the report (breaks byte-identical reruns)")
        sp.add_argument("--verbose", "-v", action="store_true")
        if name in SUITES:
            sp.add_argument("--horizon", type=int)
            sp.add_argument("--chunk-size", type=int)
            sp.add_argument("--max-witnesses", type=int)
            sp.add_argument("--replay", help="re-run the witnesses stored in a report")
        if name in ("verify-selfdual", "verify-roundtrip"):
            sp.add_argument("--rule")
        if name == "verify-jconstruct":
            sp.add_argument("--chooser")
        if name in ("split-stats", "factorize"):
            sp.add_argument("--p", nargs="+", type=float)
        if name == "split-stats":
            sp.add_argument("--buffer", type=int)
            sp.add_argument("--depth", type=int)
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--permutations", type=int)
            sp.add_argument("--indep-pairs", type=int)
            sp.add_argument("--dump-samples", help="CSV of per-trial pieces")
        if name == "arcsine":
            sp.add_argument("--n", type=int)
            sp.add_argument("--alpha", type=float)
        if name == "factorize":
            sp.add_argument("--v", nargs="+", type=float)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "verbose", "command") or value is None:
            continue
        values[key] = _coerce(key, value)
    try:
        return ExperimentConfig(command=args.command, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# suites


def _derived_seed(seed: int, *salt: int) -> int:
    return int(np.random.SeedSequence([seed, *salt]).generate_state(1, dtype=np.uint64)[0])


def _rule_for(cfg: ExperimentConfig, tau: SplittingFamily):
    if cfg.rule is not None:
        return parse_rule(cfg.rule)
    if isinstance(tau, BracketFamily):
        return tau.rule
    return None


def run_verification(cfg: ExperimentConfig) -> list[CheckResult]:
    law = cfg.law_obj()
    tau = cfg.make_family(law)
    rule = _rule_for(cfg, tau)
    tallies = run_suite(cfg.command, law, cfg.horizon, cfg.trials, cfg.seed,
                        tau=None if cfg.command == "verify-selfdual" else tau, rule=rule,
                        chunk_size=cfg.chunk_size, workers=cfg.workers,
                        max_witnesses=cfg.max_witnesses)
    return [CheckResult.from_tally(t) for t in tallies]


def run_replay(cfg: ExperimentConfig) -> tuple[dict, list[CheckResult]]:
    try:
        original = load_report(cfg.replay)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report {cfg.replay}: {exc}") from None
    if not isinstance(original, dict) or not isinstance(original.get("config"), dict):
        raise ConfigError(f"{cfg.replay} is not a splitlab report")
    if original.get("command") != cfg.command:
        raise ConfigError(f"report was produced by {original.get('command')!r}, not {cfg.command!r}")
    ocfg = original["config"]
    replay_cfg = ExperimentConfig(**{k: v for k, v in ocfg.items() if k in FIELD_TYPES})
    law = replay_cfg.law_obj()
    tau = replay_cfg.make_family(law)
    rule = _rule_for(replay_cfg, tau)
    results = []
    for check in original["checks"]:
        if not check["witnesses"]:
            continue
        again, same = [], True
        for stored in check["witnesses"]:
            w = replay_witness(check["name"], stored, tau, rule)
            if w is None:
                same = False
                continue
            encoded = w.to_json()
            same &= encoded == stored
            again.append(encoded)
        results.append(CheckResult(check["name"], "fail" if again else "pass",
                                   len(check["witnesses"]), 0, len(again), witnesses=again,
                                   extra={"reproduced": bool(same)}))
    return replay_cfg.echo(), results


def run_split_stats(cfg: ExperimentConfig) -> list[CheckResult]:
    law = cfg.law_obj()
    tau = cfg.make_family(law)
    results, dump_rows = [], []
    alpha_adj = cfg.alpha / len(KS_COORDINATES)
    for i, p in enumerate(cfg.p):
        run = stats.splitting_experiment(tau, law, p, cfg.buffer, cfg.trials, _derived_seed(cfg.seed, 1, i))
        kept = len(run.records)
        if kept < stats.KS_MIN_SAMPLE:
            raise ConfigError(f"only {kept} usable trials at p={p}; KS needs {stats.KS_MIN_SAMPLE}")
        left, right = stats.functional_table(run, cfg.depth)
        suspect = law.diffuse and run.tie_fraction > stats.SUSPECT_TIE_FRACTION
        for c, coord in enumerate(KS_COORDINATES):
            ks = stats.ks_two_sample(left[:, c], right[:, c], alpha_adj)
            results.append(CheckResult(
                f"ks[p={p!r},{coord}]", "pass" if ks.passed else "fail", kept, run.n_ties, 0,
                ks.statistic, ks.p_value, extra={"alpha": alpha_adj, "suspect": suspect}))
        m = min(cfg.indep_pairs, kept)
        ind = stats.permutation_independence(left[:m], right[:m], cfg.permutations,
                                             _derived_seed(cfg.seed, 2, i), cfg.alpha)
        results.append(CheckResult(
            f"independence[p={p!r}]", "pass" if ind.passed else "fail", m, run.n_ties, 0,
            ind.statistic, ind.p_value, extra={"alpha": cfg.alpha, "permutations": cfg.permutations,
                                               "suspect": suspect}))
        if cfg.dump_samples:
            dump_rows += [[p, *lrow, *rrow] for lrow, rrow in zip(left.tolist(), right.tolist())]
    if cfg.dump_samples:
        write_samples(cfg.dump_samples, dump_rows)
    return results


def write_samples(path, rows) -> None:
    header = ["p", "tau", *(f"pre_{c}" for c in KS_COORDINATES[1:]),
              "co_tau", *(f"post_{c}" for c in KS_COORDINATES[1:])]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if i not in (1, 6) else int(v)
                                 for i, v in enumerate(row)])
    except OSError as exc:
        raise ConfigError(f"cannot write samples to {path}: {exc}") from None


def arcsine_counts(tau: SplittingFamily, law, n: int, trials: int, seed: int,
                   chunk_size: int = 100000) -> tuple[np.ndarray, int]:
    counts = np.zeros(n + 1, dtype=np.int64)
    ties = 0
    for c in range(-(-trials // chunk_size)):
        size = min(chunk_size, trials - c * chunk_size)
        x = stats.sample_paths(law, size, n, seed, stream=c)
        t, tie = tau.eval_batch(x)
        counts += np.bincount(t[~tie], minlength=n + 1)
        ties += int(tie.sum())
    return counts, ties


def run_arcsine(cfg: ExperimentConfig) -> list[CheckResult]:
    law = cfg.law_obj()
    tau = cfg.make_family(law)
    counts, ties = arcsine_counts(tau, law, cfg.n, cfg.trials, cfg.seed)
    test = stats.chi_square_gof(counts, stats.arcsine_pmf(cfg.n), cfg.alpha)
    return [CheckResult(f"arcsine[n={cfg.n}]", "pass" if test.passed else "fail",
                        int(counts.sum()), ties, 0, test.statistic, test.p_value,
                        extra={"alpha": cfg.alpha, "dof": test.extra["dof"],
                               "counts": counts.tolist()})]


def run_factorize(cfg: ExperimentConfig) -> list[CheckResult]:
    law = cfg.law_obj()
    tau = cfg.make_family(law)
    out = []
    for i, p in enumerate(cfg.p):
        for j, v in enumerate(cfg.v):
            rep = stats.factorization_check(tau, law, p, v, cfg.trials, _derived_seed(cfg.seed, 3, i, j))
            out.append(CheckResult(
                f"factorization[p={p!r},v={v!r}]", "pass" if rep.passed else "fail",
                rep.sizes[0], rep.extra["n_ties"], 0, rep.statistic, None,
                extra={k: rep.extra[k] for k in ("target", "se", "diff", "mean")}))
    return out


def run(cfg: ExperimentConfig) -> RunReport:
    """Execute one suite and return its report (exit code via :func:`exit_code`)."""
    start = time.perf_counter()
    config_echo = cfg.echo()
    if cfg.replay:
        if cfg.command not in SUITES:
            raise ConfigError("--replay applies to verify-* suites only")
        config_echo, checks = run_replay(cfg)
    elif cfg.command in SUITES:
        checks = run_verification(cfg)
    elif cfg.command == "split-stats":
        checks = run_split_stats(cfg)
    elif cfg.command == "arcsine":
        checks = run_arcsine(cfg)
    else:
        checks = run_factorize(cfg)
    elapsed = (time.perf_counter() - start) * 1000.0
    log.info("%s finished in %.0f ms", cfg.command, elapsed)
    return RunReport(cfg.command, config_echo, config_echo["seed"], cfg.workers, checks,
                     round(elapsed, 3) if cfg.record_time else None)


def exit_code(report: RunReport) -> int:
    if not report.checks:
        return 2
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
        report = run(cfg)
    except ConfigError as exc:
        print(f"splitlab: error: {exc}", file=sys.stderr)
        return 2
    code = exit_code(report)
    if code == 2:
        print("splitlab: error: no checks ran", file=sys.stderr)
        return 2
    try:
        if cfg.output:
            emit_report(report, cfg.output)
        else:
            sys.stdout.write(dumps(report))
    except OSError as exc:
        print(f"splitlab: error: cannot write report: {exc}", file=sys.stderr)
        return 2
    for check in report.checks:
        print(f"{check.status:8s} {check.name}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
