"""Dimension-sweep harness comparing online and batch query complexity.

For each dimension d and trial, the harness samples a size-s* support
uniformly at random, assigns the configured coefficients to it (optionally a
power-decay scheme), runs the online selection to s* features against a
fresh source, and logs the two online phase costs next to the batch proxies
evaluated at the batch sample-size bound.  Rows go to CSV; per-dimension
means of the log2 cost ratios and recovery rates go to a JSON summary next
to it.

Seeding is hierarchical: trial (d, t) derives its generator from
(seed, d, t), so any subset of the sweep reproduces identical rows and
reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .baseline import n_omp, omp_complexity_proxies
from .datasource import DataSource
from .driver import SelectConfig, oomp
from .model import CovarianceSpec, ModelSpec, build_oracle, coordinate_bound

__all__ = [
    "CSV_HEADER",
    "DecayScheme",
    "ExperimentConfig",
    "ResultRow",
    "emit",
    "main",
    "run_sweep",
]

CSV_HEADER = (
    "d,trial,recovered,c_oomp_tryselect,c_oomp_optim,"
    "c_omp_tryselect,c_omp_optim,log2_ratio_tryselect,log2_ratio_optim"
)

DEFAULT_COEFFICIENTS = (1.2, 1.1, 1.0, 0.9, 0.8)
DEFAULT_DIMS = (8, 16, 32, 64, 128, 256, 512)


@dataclass(frozen=True)
class DecayScheme:
    """Coefficient magnitudes (1/sqrt(s*)) (1 - (q-1)/s*)^gamma for q = 1..s*."""

    gamma: float

    def coefficients(self, s_star: int) -> tuple[float, ...]:
        if s_star < 1:
            raise ValueError("s_star must be positive")
        base = 1.0 / math.sqrt(s_star)
        return tuple(
            base * (1.0 - (q - 1.0) / s_star) ** self.gamma for q in range(1, s_star + 1)
        )


@dataclass(frozen=True)
class ExperimentConfig:
    design: CovarianceSpec = CovarianceSpec(kind="diagonal", halfwidth=0.1)
    dims: tuple[int, ...] = DEFAULT_DIMS
    s_star: int = 5
    coefficients: tuple[float, ...] = DEFAULT_COEFFICIENTS
    decay: DecayScheme | None = None
    eta: float = 0.5
    delta: float = 0.1
    trials: int = 5
    seed: int = 0
    setting: str = "stream"
    c_T: float = 0.01
    max_T: int = 100_000
    budget: float | None = None
    output_path: str = "oomp_sweep.csv"
    rescale_coefficients: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValueError("dims must be a nonempty tuple of positive integers")
        if any(a >= b for a, b in zip(self.dims, self.dims[1:])):
            raise ValueError("dims must be strictly increasing")
        if self.s_star < 1 or self.s_star > min(self.dims):
            raise ValueError("s_star must lie in [1, min(dims)]")
        if self.decay is None and len(self.coefficients) != self.s_star:
            raise ValueError("coefficients length must equal s_star")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.setting not in ("stream", "database"):
            raise ValueError("setting must be 'stream' or 'database'")
        if self.c_T <= 0:
            raise ValueError("c_T must be positive")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    def trial_coefficients(self) -> tuple[float, ...]:
        if self.decay is not None:
            return self.decay.coefficients(self.s_star)
        return self.coefficients


@dataclass
class ResultRow:
    d: int
    trial: int
    recovered: bool
    c_oomp_tryselect: int
    c_oomp_optim: int
    c_omp_tryselect: int
    c_omp_optim: int
    log2_ratio_tryselect: float
    log2_ratio_optim: float


def _log2_ratio(num: int, den: int) -> float:
    if num <= 0:
        return -math.inf
    return math.log2(num / den)


def _trial_model(cfg: ExperimentConfig, d: int, rng: np.random.Generator) -> ModelSpec:
    support = tuple(sorted(int(i) for i in rng.choice(d, size=cfg.s_star, replace=False)))
    coefficients = cfg.trial_coefficients()
    if cfg.rescale_coefficients:
        # Shrink so the response bound ||beta*||_1 M + eta <= 1 holds; needed
        # for correlated designs where M exceeds the raw draw half-width.
        m = coordinate_bound(cfg.design, d)
        scale = (1.0 - cfg.eta) / (sum(abs(c) for c in coefficients) * m)
        if scale < 1.0:
            coefficients = tuple(scale * c for c in coefficients)
    return ModelSpec(
        d=d, support=support, coefficients=coefficients, cov=cfg.design, eta=cfg.eta
    )


def run_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run trials for every configured dimension; deterministic in cfg.seed."""
    rows: list[ResultRow] = []
    for d in cfg.dims:
        for trial in range(cfg.trials):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, d, trial]))
            spec = _trial_model(cfg, d, rng)
            oracle = build_oracle(spec)
            if oracle.mu_star >= 1.0:
                raise ValueError(
                    f"irrepresentability constant {oracle.mu_star:.3f} >= 1 at d={d}; "
                    "this design admits no recovery guarantee"
                )
            src = DataSource(spec, cfg.setting, rng, cost_cap=cfg.budget)
            sel_cfg = SelectConfig.from_oracle(
                oracle,
                cfg.delta,
                spec.M,
                setting=cfg.setting,
                iteration_scale=cfg.c_T,
                max_T=cfg.max_T,
                budget=cfg.budget,
            )
            result = oomp(cfg.delta, cfg.s_star, src, sel_cfg)
            recovered = (not result.interrupted) and sorted(result.S) == sorted(spec.support)
            n_batch = n_omp(
                sigma_noise=cfg.eta,
                d=d,
                delta=cfg.delta,
                mu_star=oracle.mu_star,
                rho=oracle.rho,
                beta_min=min(abs(c) for c in spec.coefficients),
            )
            c_omp_ts, c_omp_opt = omp_complexity_proxies(cfg.s_star, d, n_batch)
            ledger = result.ledger
            rows.append(
                ResultRow(
                    d=d,
                    trial=trial,
                    recovered=recovered,
                    c_oomp_tryselect=ledger.c_tryselect,
                    c_oomp_optim=ledger.c_optim,
                    c_omp_tryselect=c_omp_ts,
                    c_omp_optim=c_omp_opt,
                    log2_ratio_tryselect=_log2_ratio(ledger.c_tryselect, c_omp_ts),
                    log2_ratio_optim=_log2_ratio(ledger.c_optim, c_omp_opt),
                )
            )
    return rows


def summarize(rows: Sequence[ResultRow]) -> list[dict]:
    """Per-dimension arithmetic means, in CSV row order."""
    out: list[dict] = []
    for d in dict.fromkeys(r.d for r in rows):
        batch = [r for r in rows if r.d == d]
        n = len(batch)
        out.append(
            {
                "d": d,
                "trials": n,
                "recovery_rate": sum(r.recovered for r in batch) / n,
                "mean_c_oomp_tryselect": sum(r.c_oomp_tryselect for r in batch) / n,
                "mean_c_oomp_optim": sum(r.c_oomp_optim for r in batch) / n,
                "mean_log2_ratio_tryselect": sum(r.log2_ratio_tryselect for r in batch) / n,
                "mean_log2_ratio_optim": sum(r.log2_ratio_optim for r in batch) / n,
            }
        )
    return out


def emit(rows: Sequence[ResultRow], path: str | Path, cfg: ExperimentConfig | None = None) -> tuple[Path, Path]:
    """Write rows as CSV at ``path`` and a JSON summary beside it."""
    csv_path = Path(path)
    json_path = csv_path.with_suffix(".json")
    try:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER.split(","))
            for r in rows:
                writer.writerow(
                    [
                        r.d,
                        r.trial,
                        "true" if r.recovered else "false",
                        r.c_oomp_tryselect,
                        r.c_oomp_optim,
                        r.c_omp_tryselect,
                        r.c_omp_optim,
                        repr(r.log2_ratio_tryselect),
                        repr(r.log2_ratio_optim),
                    ]
                )
        summary: dict = {"per_d": summarize(rows)}
        if cfg is not None:
            summary["config"] = {
                "design": cfg.design.kind,
                "phi": cfg.design.phi,
                "B": cfg.design.halfwidth,
                "eta": cfg.eta,
                "dims": list(cfg.dims),
                "s_star": cfg.s_star,
                "coefficients": list(cfg.trial_coefficients()),
                "delta": cfg.delta,
                "trials": cfg.trials,
                "seed": cfg.seed,
                "setting": cfg.setting,
                "c_T": cfg.c_T,
                "max_T": cfg.max_T,
                "budget": cfg.budget,
            }
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed to write results to {csv_path}: {exc}") from exc
    return csv_path, json_path


def config_from_dict(raw: dict) -> ExperimentConfig:
    design_cfg = raw.get("design", {})
    decay_cfg = raw.get("decay")
    kwargs: dict = {}
    if design_cfg or "B" in raw:
        kind = str(design_cfg.get("kind", "diagonal"))
        kwargs["design"] = CovarianceSpec(
            kind=kind,
            halfwidth=float(raw.get("B", design_cfg.get("B", 0.1))),
            phi=float(design_cfg.get("phi", 0.5 if kind == "toeplitz" else 0.0)),
        )
    for key in ("dims", "coefficients"):
        if key in raw:
            kwargs[key] = tuple(raw[key])
    for key, cast in (
        ("s_star", int),
        ("eta", float),
        ("delta", float),
        ("trials", int),
        ("seed", int),
        ("setting", str),
        ("c_T", float),
        ("max_T", int),
        ("output_path", str),
        ("rescale_coefficients", bool),
    ):
        if key in raw:
            kwargs[key] = cast(raw[key])
    if "budget" in raw:
        kwargs["budget"] = None if raw["budget"] is None else float(raw["budget"])
    if decay_cfg is not None:
        kwargs["decay"] = DecayScheme(gamma=float(decay_cfg["gamma"]))
        kwargs.setdefault("coefficients", ())
    return ExperimentConfig(**kwargs)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oomp-sweep",
        description="Dimension sweep comparing online and batch selection query costs.",
    )
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--design", choices=("diagonal", "toeplitz"))
    parser.add_argument("--dims", type=str, help="comma-separated dimensions")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--setting", choices=("stream", "db"))
    parser.add_argument("--ct", type=float, help="iteration budget scale c_T")
    parser.add_argument("--budget", type=float, help="per-trial query cost cap")
    parser.add_argument("--out", type=str, help="CSV output path")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw: dict = {}
        if args.config is not None:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        cfg = config_from_dict(raw)
        updates: dict = {}
        if args.design is not None:
            if args.design == "toeplitz":
                phi = cfg.design.phi if cfg.design.phi > 0.0 else 0.5
            else:
                phi = 0.0
            updates["design"] = replace(cfg.design, kind=args.design, phi=phi)
        if args.dims is not None:
            updates["dims"] = tuple(int(tok) for tok in args.dims.split(",") if tok)
        if args.trials is not None:
            updates["trials"] = args.trials
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.setting is not None:
            updates["setting"] = "database" if args.setting == "db" else "stream"
        if args.ct is not None:
            updates["c_T"] = args.ct
        if args.budget is not None:
            updates["budget"] = args.budget
        if args.out is not None:
            updates["output_path"] = args.out
        if updates:
            cfg = replace(cfg, **updates)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        rows = run_sweep(cfg)
        csv_path, json_path = emit(rows, cfg.output_path, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    recovered = sum(r.recovered for r in rows)
    print(f"wrote {csv_path} and {json_path}: {recovered}/{len(rows)} trials recovered")
    return 0


if __name__ == "__main__":
    sys.exit(main())
