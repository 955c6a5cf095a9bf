"""
SmoothLab - Experiment Orchestrator
Parses an experiment config, dispatches to the requested experiment, writes the
JSON report and CSV artifacts, and records the run in the SQLite run log.
"""
import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv

from src.config import EXPERIMENTS, ScenarioConfig, apply_overrides, build_scenario, parse_config
from src.errors import BudgetExceededError, ConfigurationError, SmoothLabError
from src.experiments import empirical_poa, lower_bound_sweep, ratio_regimes
from src.lattice import TOL, check_dmr
from src.learning import empirical_distribution, run_repeated, verify_oblivious_cce
from src.reports import ReportHeader, ReportPayload, ReportWriter, RunReport, jsonable, report_schema
from src.sinr import random_instance, verify_channel_smoothness
from src.smoothness import E_GAP, check_lemma_chain_eon, correlation_gap, valuation_profiles, verify_smoothness
from src.storage import RunLog


# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FLAGGED = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_ERROR = 4

LOWER_BOUND_CAP = 17.0

# (status, result, artifacts, mode, samples)
Outcome = Tuple[str, Dict, List[str], str, Optional[int]]


class SmoothLab:
    """Main experiment orchestrator."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.writer = ReportWriter(config.out_dir())

    def run(self) -> RunReport:
        started = datetime.now(timezone.utc)
        clock = time.perf_counter()
        handlers = {
            "simulate": self._simulate,
            "verify-smoothness": self._verify_smoothness,
            "correlation-gap": self._correlation_gap,
            "lower-bound": self._lower_bound,
            "sinr": self._sinr,
            "lemma-check": self._lemma_check,
        }
        logger.info("starting %s with seed %d", self.config.experiment, self.config.seed)
        status, result, artifacts, mode, samples = handlers[self.config.experiment]()
        payload = ReportPayload(
            experiment=self.config.experiment,
            seed=self.config.seed,
            mode=mode,
            samples=samples,
            status=status,
            exit_code=EXIT_OK if status == "ok" else EXIT_FLAGGED,
            config=self.config.echo(),
            result=jsonable(result),
            artifacts=artifacts,
        )
        header = ReportHeader(started_at=started.isoformat(), wall_time_s=time.perf_counter() - clock)
        return RunReport(header=header, payload=payload)

    # --- experiments ---

    def _simulate(self) -> Outcome:
        cfg = self.config
        scenario = build_scenario(cfg)
        spec = cfg.learner.build()
        seeds = cfg.replicate_seeds()
        poa = empirical_poa(
            scenario, spec, cfg.simulate.T, seeds,
            params=cfg.params.build(),
            gamma=cfg.simulate.gamma,
            workers=cfg.workers(),
            budget=cfg.budget,
            samples=cfg.samples,
            mode=cfg.mode,
        )
        result = {"poa": poa.to_dict()}
        artifacts = []
        status = "ok" if poa.within_bound else "flagged"

        if cfg.simulate.trace_csv or cfg.simulate.cce_epsilon is not None:
            trace = run_repeated(scenario, spec, cfg.simulate.T, seeds[0])
            if cfg.simulate.trace_csv:
                artifacts.append(self.writer.write_trace(trace, f"trace_seed{seeds[0]}.csv").name)
            if cfg.simulate.cce_epsilon is not None:
                cce = verify_oblivious_cce(
                    empirical_distribution(trace), cfg.simulate.cce_epsilon,
                    budget=cfg.budget, samples=cfg.samples, seed=seeds[0], mode=cfg.mode,
                )
                result["cce"] = cce.to_dict()
                if not cce.ok:
                    status = "flagged"
        return status, result, artifacts, poa.mode, cfg.samples if poa.mode == "mc" else None

    def _verify_smoothness(self) -> Outcome:
        cfg = self.config
        scenario = build_scenario(cfg)
        mech = scenario.mechanisms[cfg.verify.mechanism]
        certificate = verify_smoothness(mech, valuation_profiles(mech, cfg.verify.value_set), cfg.params.build())
        result = {"mechanism": mech.to_dict(), "certificate": certificate.to_dict()}
        return ("ok" if certificate.verified else "counterexample"), result, [], "exact", None

    def _correlation_gap(self) -> Outcome:
        cfg = self.config
        scenario = build_scenario(cfg)
        section = cfg.correlation_gap
        v = scenario.valuations[section.valuation]
        gap = correlation_gap(v, section.xs, section.alphas, cfg.budget, cfg.samples, cfg.seed, cfg.mode)
        try:
            dmr = check_dmr(v, budget=cfg.budget).to_dict()
        except BudgetExceededError as e:
            logger.warning("skipping exhaustive DMR check: %s", e)
            dmr = None
        result = {"gap": gap.to_dict(), "bound": E_GAP, "dmr": dmr}
        exceeded = gap.ratio > E_GAP + TOL + (gap.radius or 0.0)
        return ("flagged" if exceeded else "ok"), result, [], gap.mode, gap.samples

    def _lower_bound(self) -> Outcome:
        section = self.config.lower_bound
        rows = lower_bound_sweep(section.ks, section.search, section.search_budget, workers=self.config.workers())
        path = self.writer.write_sweep(rows, f"lower_bound_seed{self.config.seed}.csv")
        ratios = [row["ratio"] for row in rows]
        regimes = ratio_regimes(rows)
        result = {
            "rows": rows,
            "below_cap": all(row["best_oblivious_value"] < LOWER_BOUND_CAP for row in rows),
            "ratio_nondecreasing": all(b >= a - TOL for a, b in zip(ratios, ratios[1:])),
            # the ratio is monotone only among rows whose best response bids on the same number of groups
            "ratio_nondecreasing_within_k_prime": {str(kp): ok for kp, ok in regimes.items()},
        }
        status = "ok" if result["below_cap"] and all(regimes.values()) else "flagged"
        return status, result, [path.name], "exact", None

    def _sinr(self) -> Outcome:
        section = self.config.sinr
        if section.links is not None:
            instances = [section.build()]
        else:
            streams = np.random.SeedSequence(self.config.seed).spawn(section.instances)
            instances = [
                random_instance(section.random_links, stream, section.side, section.min_length,
                                section.max_length, **section.constants())
                for stream in streams
            ]
        rows = []
        holds = True
        for instance in instances:
            channel, certificate = verify_channel_smoothness(instance)
            rows.append({
                "instance": instance.to_dict(),
                "channel": channel.to_dict(),
                "certificate": {k: v for k, v in certificate.to_dict().items() if k != "deviation_table"},
            })
            holds = holds and channel.holds and certificate.verified
        result = {"instances": rows, "all_hold": holds}
        return ("ok" if holds else "counterexample"), result, [], "exact", None

    def _lemma_check(self) -> Outcome:
        cfg = self.config
        scenario = build_scenario(cfg)
        report = check_lemma_chain_eon(
            scenario, cfg.params.build(),
            samples=cfg.samples, budget=cfg.budget, seed=cfg.seed, mode=cfg.mode,
            w_source=cfg.lemma.w_source,
        )
        return ("ok" if report.ok else "counterexample"), report.to_dict(), [], report.mode, report.samples


def _print_summary(report: RunReport, path) -> None:
    payload = report.payload
    print("=" * 70)
    marker = "✅" if payload.exit_code == EXIT_OK else "⚠"
    print(f"{marker} SmoothLab {payload.experiment} - {payload.status}")
    print(f"   Seed: {payload.seed}   Mode: {payload.mode}")
    if payload.samples:
        print(f"   Samples: {payload.samples}")
    print(f"   Wall time: {report.header.wall_time_s:.2f}s")
    print(f"   Report: {path}")
    for name in payload.artifacts:
        print(f"   Artifact: {name}")
    print("=" * 70)


def run(config: ScenarioConfig) -> RunReport:
    return SmoothLab(config).run()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothlab", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default="config.yaml")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--budget", type=int)
        cmd.add_argument("--out-dir")
        cmd.add_argument("--mode", choices=["exact", "mc"])
        cmd.add_argument("--samples", type=int)
    schema = sub.add_parser("schema")
    schema.add_argument("--out")
    return parser


def _fail(args, config: Optional[ScenarioConfig], run_log: Optional[RunLog], code: int, status: str,
          error: Exception) -> int:
    logger.error("%s: %s", status, error)
    if run_log is not None:
        run_log.log_run(config.experiment, config.seed, status, code, args.config, errors=str(error))
    print("=" * 70)
    print(f"⚠ SmoothLab {args.command} failed ({status}): {error}")
    print("=" * 70)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "schema":
        text = json.dumps(report_schema(), indent=2, sort_keys=True)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as f:
                f.write(text + "\n")
        else:
            print(text)
        return EXIT_OK

    config = None
    run_log = None
    try:
        config = parse_config(args.config)
        config = apply_overrides(
            config,
            experiment=args.command,
            seed=args.seed,
            budget=args.budget,
            mode=args.mode,
            samples=args.samples,
            out_dir=args.out_dir,
        )
        run_log = RunLog(config.db_path())
        lab = SmoothLab(config)
        report = lab.run()
        path = lab.writer.save_report(report, config.output.report_name)
        run_log.log_run(config.experiment, config.seed, report.payload.status, report.payload.exit_code,
                        args.config, str(path))
        _print_summary(report, path)
        return report.payload.exit_code
    except ConfigurationError as e:
        return _fail(args, config, run_log, EXIT_CONFIG, "config_error", e)
    except BudgetExceededError as e:
        return _fail(args, config, run_log, EXIT_BUDGET, "budget_exceeded", e)
    except SmoothLabError as e:
        return _fail(args, config, run_log, EXIT_ERROR, "error", e)


if __name__ == "__main__":
    sys.exit(main())
