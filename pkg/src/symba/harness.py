"""Experiment configuration, orchestration and summary statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .adversary import ConfigInvalid, RunRecord, attack_run, baseline_run, class_oracle
from .dist import as_fraction, default_eps
from .fsrp import PROTOCOLS, make_protocol
from .lockstep import GroupLayout, LockstepClass, chain_generator, find_witness

SCHEDULERS = ("adversary-lockstep", "benign-fair", "both")
FORMATS = ("json-lines", "csv")


@dataclass
class ExperimentConfig:
    n: int = 25
    t: int = 5
    R: int = 2
    eps: Fraction | None = None
    protocol: str = "benor-style"
    scheduler: str = "both"
    rounds_cap: int = 64
    chain_rounds: int | None = None  # None: double from 4 up to max_chain_rounds
    max_chain_rounds: int = 64
    seeds: int = 1000
    seed_base: int = 0
    out: str | None = None
    format: str = "json-lines"
    policy: str = "per-round"
    broadcast: str = "plain"
    workers: int = 1

    @property
    def c(self) -> Fraction:
        return Fraction(self.t, self.n)

    @property
    def epsilon(self) -> Fraction:
        return default_eps(self.c, self.R) if self.eps is None else as_fraction(self.eps)

    def layout(self) -> GroupLayout:
        return GroupLayout(self.n, self.t)


@dataclass
class ConfigReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_config(cfg: ExperimentConfig) -> ConfigReport:
    """Hard errors make the configuration unusable; warnings flag bounds that do not apply at this scale."""
    rep = ConfigReport()
    n, t, R = cfg.n, cfg.t, cfg.R
    if n <= 0 or t <= 0:
        rep.errors.append("n and t must be positive")
        return rep
    if n % t:
        rep.errors.append(f"t does not divide n (n={n}, t={t})")
    c = Fraction(t, n)
    ct = c * t
    if ct.denominator != 1 or ct < 1:
        rep.errors.append(f"c*t = {ct} is not a positive integer")
    if not 0 < c < Fraction(1, 3):
        rep.errors.append(f"c = {c} is not in (0, 1/3)")
    if R < 1:
        rep.errors.append("R must be at least 1")
    elif t <= R * R:
        rep.errors.append(f"t = {t} is not greater than R^2 = {R * R}")
    else:
        eps = cfg.epsilon
        upper = Fraction(1, R * R) - Fraction(1, t)
        if not 0 < eps < upper:
            rep.errors.append(f"eps = {eps} is not in (0, 1/R^2 - 1/t) = (0, {upper})")
        if t <= 2 * R * R / c:
            rep.warnings.append(
                f"t = {t} <= (2/c) R^2 = {2 * R * R / c}: the asymptotic tail bound does not apply"
            )
        elif not eps < c / (2 * R * R) - Fraction(1, t):
            rep.warnings.append("eps is outside the tail-bound window")
    if cfg.protocol not in PROTOCOLS:
        rep.errors.append(f"unknown protocol {cfg.protocol!r}")
    if cfg.scheduler not in SCHEDULERS:
        rep.errors.append(f"unknown scheduler {cfg.scheduler!r}")
    if cfg.format not in FORMATS:
        rep.errors.append(f"unknown format {cfg.format!r}")
    if cfg.rounds_cap < 1:
        rep.errors.append("rounds cap must be at least 1")
    if cfg.chain_rounds is not None and not 1 <= cfg.chain_rounds <= cfg.rounds_cap:
        rep.errors.append("chain horizon must lie in [1, rounds cap]")
    if cfg.seeds < 1:
        rep.errors.append("need at least one seed")
    return rep


def require_valid(cfg: ExperimentConfig) -> ConfigReport:
    rep = validate_config(cfg)
    if not rep.ok:
        raise ConfigInvalid(rep.errors)
    return rep


# -- config files ------------------------------------------------------------------


_CONVERT = {
    "n": int, "t": int, "R": int, "rounds_cap": int, "max_chain_rounds": int, "seeds": int,
    "seed_base": int, "workers": int, "chain_rounds": int, "eps": as_fraction,
}


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    names = {f.name for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in names:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        out[key] = coerce(key, value)
    return out


def coerce(key: str, value):
    if value is None or value == "":
        return None
    conv = _CONVERT.get(key)
    try:
        return conv(value) if conv else value
    except (ValueError, ZeroDivisionError) as err:
        raise ConfigInvalid(f"bad value for {key}: {value!r}") from err


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


# -- records ----------------------------------------------------------------------------


CSV_FIELDS = [f.name for f in fields(RunRecord)]


def records_to_text(records: Sequence[RunRecord], fmt: str = "json-lines") -> str:
    if fmt == "json-lines":
        return "".join(r.to_json() + "\n" for r in records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        rec = r.to_record()
        w.writerow(
            [rec[k] if k == "scheduler" else json.dumps(rec[k], sort_keys=True, separators=(",", ":")) for k in CSV_FIELDS]
        )
    return buf.getvalue()


def records_from_text(text: str, fmt: str = "json-lines") -> list[RunRecord]:
    if fmt == "json-lines":
        return [RunRecord.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]
    rows = csv.DictReader(io.StringIO(text))
    out = []
    for row in rows:
        rec = {}
        for k in CSV_FIELDS:
            v = row[k]
            rec[k] = v if k == "scheduler" else json.loads(v)
        out.append(RunRecord.from_record(rec))
    return out


# -- statistics ------------------------------------------------------------------------------


@dataclass
class SummaryStats:
    runs: dict[str, int]
    rounds_mean: dict[str, float]
    rounds_histogram: dict[str, dict[int, int]]
    undecided_at_cap: dict[str, int]
    undecided_fraction: dict[str, float]
    escape_histogram: dict[str, int]
    per_round_success: list[dict]
    in_class_survival: list[dict]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rounds_histogram"] = {s: {str(k): v for k, v in h.items()} for s, h in self.rounds_histogram.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def summarize(records: Iterable[RunRecord], oracle: Sequence[Sequence] | None = None) -> SummaryStats:
    """Aggregate run records; a pure function of its inputs.

    ``oracle[k-1][g-1]`` is the exact per-(round, group) fill probability; when
    given, it is reported next to the empirical rates, and the fraction of
    runs whose messages of rounds ``1..r`` all matched the class is reported
    next to the product of the oracle entries for those rounds.
    """
    records = list(records)
    by = {}
    for r in records:
        by.setdefault(r.scheduler, []).append(r)
    runs = {s: len(v) for s, v in sorted(by.items())}
    mean = {s: sum(r.rounds_used for r in v) / len(v) for s, v in sorted(by.items())}
    hist = {s: dict(sorted(Counter(r.rounds_used for r in v).items())) for s, v in sorted(by.items())}
    undecided = {s: sum(not r.all_decided for r in v) for s, v in sorted(by.items())}
    frac = {s: undecided[s] / runs[s] for s in runs}
    attacks = by.get("adversary-lockstep", [])
    esc = Counter("never" if r.first_escape_round is None else str(r.first_escape_round) for r in attacks)
    per_round = []
    survival = []
    if attacks:
        E = max((len(r.per_round_group_success) for r in attacks), default=0)
        G = max((len(row) for r in attacks for row in r.per_round_group_success), default=0)
        for k in range(1, E + 1):
            for g in range(1, G + 1):
                trials = [r.per_round_group_success[k - 1][g - 1] for r in attacks if len(r.per_round_group_success) >= k]
                entry = {
                    "round": k,
                    "group": g,
                    "trials": len(trials),
                    "successes": sum(trials),
                    "rate": sum(trials) / len(trials) if trials else None,
                }
                if oracle is not None:
                    entry["oracle"] = float(oracle[k - 1][g - 1])
                per_round.append(entry)
        product = Fraction(1)
        for k in range(1, E + 1):
            inside = sum(r.first_escape_round is None or r.first_escape_round > k for r in attacks)
            entry = {"messages_through_round": k, "runs": len(attacks), "in_class": inside, "fraction": inside / len(attacks)}
            if oracle is not None:
                for g in range(len(oracle[k - 1])):
                    product *= Fraction(oracle[k - 1][g])
                entry["oracle"] = float(product)
            survival.append(entry)
    return SummaryStats(runs, mean, hist, undecided, frac, dict(sorted(esc.items())), per_round, survival)


def standard_error(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials) if trials else math.inf


# -- orchestration ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: ConfigReport
    witness: LockstepClass | None
    records: list[RunRecord]
    summary: SummaryStats
    files: dict[str, str]


def locate_witness(cfg: ExperimentConfig) -> LockstepClass | None:
    layout = cfg.layout()
    pf = make_protocol(cfg.protocol, cfg.n, cfg.t)
    if cfg.chain_rounds is not None:
        for cls in chain_generator(layout, pf, cfg.chain_rounds, cfg.epsilon):
            if cls.undecided_groups():
                return cls
        return None
    return find_witness(layout, pf, 4, min(cfg.max_chain_rounds, cfg.rounds_cap), cfg.epsilon)


def _one_run(args) -> RunRecord:
    kind, cfg, witness, seed = args
    layout = cfg.layout()
    pf = make_protocol(cfg.protocol, cfg.n, cfg.t)
    if kind == "adversary-lockstep":
        return attack_run(witness, layout, pf, seed, cfg.rounds_cap, cfg.epsilon, cfg.policy, cfg.broadcast)
    inputs = witness.inputs if witness is not None else tuple(g % 2 for g in range(layout.groups))
    return baseline_run(inputs, layout, pf, seed, cfg.rounds_cap, cfg.policy, cfg.broadcast)


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    """Find a witness class, run the attack and baseline batches, summarise, and write files."""
    report = require_valid(cfg)
    witness = locate_witness(cfg)
    kinds = []
    if cfg.scheduler in ("adversary-lockstep", "both") and witness is not None:
        kinds.append("adversary-lockstep")
    if cfg.scheduler in ("benign-fair", "both"):
        kinds.append("benign-fair")
    jobs = [(k, cfg, witness, cfg.seed_base + i) for k in kinds for i in range(cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_one_run, jobs, chunksize=16))
    else:
        records = []
        for job in jobs:
            records.append(_one_run(job))
            if progress:
                progress(len(records), len(jobs))
    oracle = None
    if witness is not None:
        oracle = class_oracle(witness, cfg.layout(), make_protocol(cfg.protocol, cfg.n, cfg.t), cfg.epsilon)
    summary = summarize(records, oracle)
    files = write_outputs(cfg, witness, records, summary) if cfg.out else {}
    return ExperimentResult(cfg, report, witness, records, summary, files)


def config_record(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["eps"] = str(cfg.epsilon)
    return d


def write_outputs(cfg: ExperimentConfig, witness, records, summary) -> dict[str, str]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "jsonl" if cfg.format == "json-lines" else "csv"
    files = {
        "records": out / f"records.{ext}",
        "summary": out / "summary.json",
        "config": out / "config.json",
    }
    files["records"].write_text(records_to_text(records, cfg.format))
    files["summary"].write_text(summary.to_json())
    files["config"].write_text(json.dumps(config_record(cfg), sort_keys=True, indent=2) + "\n")
    if witness is not None:
        files["witness"] = out / "witness.json"
        files["witness"].write_text(json.dumps(witness.to_record(), sort_keys=True) + "\n")
    return {k: str(v) for k, v in files.items()}
