"""Run configuration and the staged report pipeline behind the CLI."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import pandas as pd

from . import __version__
from .analysis import FrameOptions, build_frame
from .benchmarks import assign_benchmark
from .channels import density_specs, quintile_bins, regime_specs
from .data import HORIZONS, load_convexity, load_index_returns, load_panel, validate_sample
from .decision import label_failures, time_split, time_split_validate
from .errors import DataError
from .reporting import (
    benchmark_table, channel_table, classifier_wide, distribution_table, event_time_profile, pf_vs_live,
    risk_table, sample_composition, wald_table, write_csv,
)
from .resampling import BLOCK_SIZES, BootstrapConfig, block_size_table, placebo_launch, wild_cluster_p
from .specs import DesignSpec, DECAY_OUTCOMES, LEVEL_OUTCOMES

STAGES = ("validate", "metrics", "benchmarks", "regress", "channels", "bootstrap", "placebo", "classify")


@dataclass
class RunConfig:
    returns: str = ""
    meta: str = ""
    benchmarks: str = ""
    convexity: str = ""
    output_dir: str = ""
    horizons: tuple = HORIZONS
    convention: str = "compound"
    winsor: tuple = (0.01, 0.99)
    min_pre_days: int = 252
    min_live_days: int = 126
    seed: int = 20240101
    threads: int = 1
    bootstrap_replications: int = 999
    block_sizes: tuple = BLOCK_SIZES
    block_scheme: str = "permute"
    wild_replications: int = 999
    placebo_replications: int = 999
    placebo_window_months: int = 36
    classifier: bool = True
    classifier_link: str = "logit"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DataError(f"unknown config keys: {unknown}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.exists():
            raise DataError(f"config file not found: {p}")
        try:
            return cls.from_dict(json.loads(p.read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"config file is not valid JSON: {exc}") from None

    def as_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def digest(self) -> str:
        # output_dir does not influence any artefact and is left out of the hash
        d = {k: v for k, v in self.as_dict().items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def check(self) -> None:
        for name in ("returns", "meta"):
            if not getattr(self, name):
                raise DataError(f"no {name} file given (flag --{name} or config key {name!r})")
        for name in ("returns", "meta", "benchmarks", "convexity"):
            path = getattr(self, name)
            if path and not Path(path).exists():
                raise DataError(f"{name} file not found: {path}")
        bad = [h for h in self.horizons if h not in HORIZONS]
        if bad:
            raise DataError(f"unknown horizons {bad}")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(eq=False)
class Context:
    config: RunConfig
    out: Path
    sample: object = None
    index_returns: pd.DataFrame | None = None
    convexity: pd.Series | None = None
    artifacts: dict = field(default_factory=dict)

    @classmethod
    def open(cls, config: RunConfig) -> "Context":
        config.check()
        out = Path(config.output_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        ctx = cls(config, out)
        series, meta = load_panel(config.returns, config.meta)
        ctx.sample = validate_sample(series, meta, config.min_pre_days, config.min_live_days)
        if config.benchmarks:
            ctx.index_returns = load_index_returns(config.benchmarks)
        if config.convexity:
            ctx.convexity = load_convexity(config.convexity)
        return ctx

    def frame(self, horizon: str, live_only: bool = False, variant: str = "full_bucket_mean") -> pd.DataFrame:
        opts = FrameOptions(self.config.convention, live_only, variant)
        return build_frame(self.sample, horizon, self.index_returns, self.convexity, opts)

    def frames(self, **kw) -> dict:
        return {h: self.frame(h, **kw) for h in self.config.horizons}

    def write(self, name: str, df: pd.DataFrame, index: bool = False) -> None:
        path = self.out / name
        rows = write_csv(df, path, index=index)
        self.artifacts[name] = {"rows": rows, "sha256": file_digest(path)}

    def manifest(self, command: str) -> Path:
        c = self.config
        inputs = {k: file_digest(getattr(c, k)) for k in ("returns", "meta", "benchmarks", "convexity") if getattr(c, k)}
        doc = {
            "command": command,
            "package_version": __version__,
            "config": {k: v for k, v in c.as_dict().items() if k != "output_dir"},
            "config_hash": c.digest(),
            "seed": c.seed,
            "inputs": inputs,
            "sample": {"members": len(self.sample), "exclusions": len(self.sample.exclusions)},
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        name = "manifest.json" if command == "report-all" else f"manifest_{command}.json"
        path = self.out / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


# ------------------------------------------------------------------ stages


def stage_validate(ctx: Context) -> None:
    s = ctx.sample
    ctx.write("exclusions.csv", pd.DataFrame([{"strategy_id": e.strategy_id, "reason": e.reason} for e in s.exclusions],
                                             columns=["strategy_id", "reason"]))
    ctx.write("eligibility.csv", pd.DataFrame([{"strategy_id": sid, "horizons": ";".join(s.eligibility[sid])}
                                              for sid in s.ids], columns=["strategy_id", "horizons"]))
    ctx.write("sample_composition.csv", sample_composition(s))


METRIC_COLUMNS = ("institution", "asset_class", "bucket", "role", "launch_year", "r_adj_pre", "r_adj_live", "decay",
                  "r_adj_early", "sigma_pre_12m", "age_years")


def stage_metrics(ctx: Context) -> None:
    frames = ctx.frames()
    for h, f in frames.items():
        cols = [c for c in f.columns if c in METRIC_COLUMNS or c.startswith(("pre_", "live_"))]
        ctx.write(f"strategy_metrics_{h}.csv", f[cols], index=True)
    ctx.write("table_pf_vs_live.csv", pf_vs_live(frames))
    if "12m" in frames:
        ctx.write("table_risk_deterioration.csv", risk_table(frames["12m"]))
    ctx.write("event_time.csv", event_time_profile(ctx.sample))


def stage_benchmarks(ctx: Context) -> None:
    frames = ctx.frames()
    rel = ("loo_rel", "loo_pb", "bm_rel", "jensen", "jensen2")
    for h, f in frames.items():
        cols = [c for c in f.columns if c.startswith(rel)]
        ctx.write(f"relative_outcomes_{h}.csv", f[cols], index=True)
    assign = [assign_benchmark(m) for m, _ in ctx.sample.members]
    ctx.write("benchmark_assignment.csv", pd.DataFrame([a.__dict__ for a in assign]))
    ctx.write("table_benchmark_distribution.csv", distribution_table(frames))


def _kinds(ctx: Context, table: dict) -> list:
    kinds = ["raw", "loo", "loo_prebeta"]
    if ctx.index_returns is not None:
        kinds += ["jensen", "bm"]
        if ctx.convexity is not None:
            kinds.append("jensen_2f")
    return [k for k in table if k in kinds]


def stage_regress(ctx: Context) -> None:
    frames = ctx.frames()
    w = {"winsor": tuple(ctx.config.winsor)}
    ctx.write("table_levels.csv", benchmark_table(frames, _kinds(ctx, LEVEL_OUTCOMES), "levels", **w))
    ctx.write("table_decay.csv", benchmark_table(frames, _kinds(ctx, DECAY_OUTCOMES), "decay", **w))
    ctx.write("table_wald_matched.csv", wald_table(frames))
    live_only = ctx.frames(live_only=True)
    lo = pd.concat([benchmark_table(live_only, ["loo"], "levels", **w).assign(table="levels"),
                    benchmark_table(live_only, ["loo"], "decay", **w).assign(table="decay")], ignore_index=True)
    ctx.write("table_loo_live_only.csv", lo)


def stage_channels(ctx: Context) -> None:
    frames = ctx.frames()
    w = {"winsor": tuple(ctx.config.winsor)}
    regime = {h: regime_specs(f, **w) for h, f in frames.items()}
    ctx.write("table_regime_extremity.csv", channel_table(regime, ["extremity", "r_adj_pre_x_extremity", "r_adj_pre"]))
    density = {h: density_specs(f, **w) for h, f in frames.items()}
    ctx.write("table_launch_density.csv", channel_table(density, ["log_density", "r_adj_pre_x_log_density", "r_adj_pre"]))
    conservative = {h: {"iii_live_only_loo_mean": regime_specs(ctx.frame(h, True, "loo_bucket_mean"), **w)["iii"]}
                    for h in ctx.config.horizons}
    ctx.write("table_regime_live_only.csv", channel_table(conservative, ["extremity", "r_adj_pre"]))
    if "12m" in frames:
        ctx.write("figure_extremity_quintiles.csv", quintile_bins(frames["12m"]))


def stage_bootstrap(ctx: Context) -> None:
    c = ctx.config
    cfg = BootstrapConfig(c.bootstrap_replications, c.block_sizes[0], c.seed, block_scheme=c.block_scheme,
                          threads=c.threads)
    tables = [block_size_table(ctx.sample, h, cfg, c.block_sizes, c.convention) for h in c.horizons]
    ctx.write("table_block_bootstrap.csv", pd.concat(tables, ignore_index=True))
    wcfg = BootstrapConfig(c.wild_replications, seed=c.seed, threads=c.threads)
    rows = []
    for h, f in ctx.frames().items():
        for which, dep in (("levels", "r_adj_live"), ("decay", "decay")):
            res = wild_cluster_p(f, DesignSpec(dep, winsor=tuple(c.winsor)), cluster="institution", config=wcfg)
            rows.append({"horizon": h, "outcome": which, "coef": res.coef, "beta": res.beta, "t_obs": res.t_obs,
                         "p_wild": res.p_value, "clusters": res.clusters, "replications": res.replications})
    ctx.write("table_wild_bootstrap.csv", pd.DataFrame(rows))


def stage_placebo(ctx: Context) -> None:
    c = ctx.config
    res = placebo_launch(ctx.sample, c.placebo_window_months, c.placebo_replications, c.seed,
                         convention=c.convention)
    ctx.write("placebo_summary.csv", pd.DataFrame([res.summary()]))
    ctx.write("placebo_strategies.csv", res.per_strategy)
    ctx.write("placebo_skipped.csv", res.skipped)


def stage_classify(ctx: Context) -> None:
    if "12m" not in ctx.config.horizons:
        raise DataError("the failure classifier needs the 12m horizon")
    f = ctx.frame("12m")
    labels = label_failures(f, time_split(f)).labels
    ctx.write("failure_labels.csv", labels, index=True)
    long = time_split_validate(f, ctx.config.classifier_link)
    ctx.write("classifier_oos_long.csv", long)
    ctx.write("table_classifier_oos.csv", classifier_wide(long))


STAGE_FUNCS = {
    "validate": stage_validate,
    "metrics": stage_metrics,
    "benchmarks": stage_benchmarks,
    "regress": stage_regress,
    "channels": stage_channels,
    "bootstrap": stage_bootstrap,
    "placebo": stage_placebo,
    "classify": stage_classify,
}


def run(config: RunConfig, command: str) -> Context:
    """Run one stage (or ``report-all``) and write its manifest."""
    ctx = Context.open(config)
    stages = STAGES if command == "report-all" else (command,)
    for name in stages:
        if name == "classify" and not config.classifier:
            continue
        STAGE_FUNCS[name](ctx)
    ctx.manifest(command)
    return ctx


def replace_config(config: RunConfig, **changes) -> RunConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})

