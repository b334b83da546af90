"""Command-line interface.

Exit codes: 0 verified/success, 1 refuted (or generalize produced no
strictly-more-general rule), 2 inconclusive, 64 usage error, 65 parse or
validation error.
"""
from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import cost as costmod
from . import pipeline as pipemod
from . import pruner, textfmt, verifier
from .ir import PeepError, validate
from .proposer import HeuristicBackend, LLMBackend, ReplayBackend

EXIT_VERIFIED = 0
EXIT_REFUTED = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64
EXIT_PARSE = 65

_VERDICT_EXIT = {"verified": EXIT_VERIFIED, "refuted": EXIT_REFUTED,
                 "inconclusive": EXIT_INCONCLUSIVE}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parse_widths(pairs: tuple) -> dict:
    widths = {}
    for item in pairs:
        var, eq, num = item.partition("=")
        if not eq or not num.isdigit() or int(num) <= 0:
            raise CliError(f"bad --width value {item!r} (expected VAR=N)",
                           EXIT_USAGE)
        widths[var] = int(num)
    return widths


def read_config(path) -> dict:
    """Line-oriented `key = value` configuration."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise CliError(f"{path}:{lineno}: expected `key = value`",
                           EXIT_USAGE)
        cfg[key.strip()] = value.strip()
    return cfg


def _load_rule(path):
    try:
        rule = textfmt.parse_rule(Path(path).read_text())
    except (OSError, PeepError) as e:
        raise CliError(str(e), EXIT_PARSE)
    diags = validate(rule)
    if diags:
        raise CliError("; ".join(str(d) for d in diags), EXIT_PARSE)
    return rule


def _budget(config: dict, exhaustive, samples, seed) -> verifier.Budget:
    def pick(flag, key, default):
        if flag is not None:
            return flag
        if key in config:
            return int(config[key])
        return default

    base = verifier.Budget()
    return verifier.Budget(
        exhaustive_limit=pick(exhaustive, "exhaustive_limit",
                              base.exhaustive_limit),
        sample_count=pick(samples, "sample_count", base.sample_count),
        constant_sample_count=pick(None, "constant_sample_count",
                                   base.constant_sample_count),
        rng_seed=pick(seed, "rng_seed", base.rng_seed))


def _backend(spec: str, config: dict, budget: verifier.Budget):
    if spec == "heuristic":
        return HeuristicBackend(budget)
    if spec == "llm":
        return LLMBackend(config)
    if spec.startswith("replay:"):
        directory = spec.split(":", 1)[1]
        if not Path(directory).is_dir():
            raise CliError(f"replay directory {directory} not found",
                           EXIT_USAGE)
        return ReplayBackend(directory)
    raise CliError(f"unknown backend {spec!r} "
                   "(expected llm, heuristic, or replay:<dir>)", EXIT_USAGE)


def _pipeline_config(config: dict, backend_spec: str,
                     budget: verifier.Budget) -> pipemod.PipelineConfig:
    kwargs = {}
    for key in ("stage1_max_iterations", "k", "max_width", "width_cap"):
        if key in config:
            kwargs[key] = int(config[key])
    table = costmod.default_table()
    if "cost_table" in config:
        table = costmod.CostTable.parse(
            Path(config["cost_table"]).read_text(), table)
    return pipemod.PipelineConfig(
        budget=budget, table=table,
        backend=_backend(backend_spec, config, budget), **kwargs)


def _emit(data: dict, out=None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)


@click.group()
def cli():
    """Verification-gated generalization of peephole rewrite rules."""


@cli.command("verify")
@click.argument("rule_file", type=click.Path(exists=True))
@click.option("--width", "widths", multiple=True, metavar="VAR=N")
@click.option("--budget-exhaustive", type=int, default=None)
@click.option("--budget-samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_verify(rule_file, widths, budget_exhaustive, budget_samples, seed):
    """Check LHS-to-RHS refinement of a rule file."""
    rule = _load_rule(rule_file)
    budget = _budget({}, budget_exhaustive, budget_samples, seed)
    verdict, _rule, used = verifier.verify_with_reduction(
        rule, _parse_widths(widths), budget)
    data = verifier.verdict_to_json(verdict)
    data["widths"] = dict(used)
    _emit(data)
    sys.exit(_VERDICT_EXIT[verdict.kind])


@cli.command("generalize")
@click.argument("instance_file", type=click.Path(exists=True))
@click.option("--backend", "backend_spec", default="heuristic",
              metavar="{llm|heuristic|replay:<dir>}")
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--out", type=click.Path())
@click.option("--budget-exhaustive", type=int, default=None)
@click.option("--budget-samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_generalize(instance_file, backend_spec, config_file, out,
                   budget_exhaustive, budget_samples, seed):
    """Run the full generalization pipeline on a concrete instance.

    Exits 0 only when the final rule is strictly more general than the
    input instance."""
    instance = _load_rule(instance_file)
    config = read_config(config_file) if config_file else {}
    budget = _budget(config, budget_exhaustive, budget_samples, seed)
    cfg = _pipeline_config(config, backend_spec, budget)
    report = pipemod.run_pipeline(instance, cfg)
    _emit(report.to_json(), out)
    if report.final_text is None:
        sys.exit(EXIT_INCONCLUSIVE)
    final = textfmt.parse_rule(report.final_text)
    # compare at the widths under which the final rule covers the input
    bindings = pipemod.match_rule(final, instance)
    if bindings is None:
        sys.exit(EXIT_REFUTED)
    widths = {v: bindings[v] for v in final.width_vars}
    result = pipemod.compare_generality(final, instance, widths, budget)
    if result.verdict == "AMoreGeneral":
        sys.exit(EXIT_VERIFIED)
    # a width-generalized rule that covers the input is more general across
    # widths even when its domain at the input's own width is identical
    widened = any(s.stage == "widths" and s.accepted for s in report.stages)
    if result.verdict == "Equal" and final.width_vars and widened:
        sys.exit(EXIT_VERIFIED)
    sys.exit(EXIT_REFUTED)


@cli.command("prune")
@click.argument("instance_file", type=click.Path(exists=True))
@click.option("--budget-exhaustive", type=int, default=None)
@click.option("--budget-samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_prune(instance_file, budget_exhaustive, budget_samples, seed):
    """Strip data flow irrelevant to the rewrite."""
    instance = _load_rule(instance_file)
    budget = _budget({}, budget_exhaustive, budget_samples, seed)
    pruned, log = pruner.prune(instance, budget)
    _emit({"pruned": textfmt.print_rule(pruned), "log": log.to_json()})
    sys.exit(EXIT_VERIFIED)


@cli.command("cost")
@click.argument("rule_file", type=click.Path(exists=True))
@click.option("--table", "table_file", type=click.Path(exists=True))
def cmd_cost(rule_file, table_file):
    """Report uOps costs and profitability for a rule file."""
    rule = _load_rule(rule_file)
    table = costmod.default_table()
    if table_file:
        table = costmod.CostTable.parse(Path(table_file).read_text(), table)
    _emit({"lhs": str(costmod.cost(rule.lhs, table)),
           "rhs": str(costmod.cost(rule.rhs, table)),
           "profitable": costmod.check_profitable(rule, table)})
    sys.exit(EXIT_VERIFIED)


@cli.command("compare")
@click.argument("rule_a", type=click.Path(exists=True))
@click.argument("rule_b", type=click.Path(exists=True))
@click.option("--width", "widths", multiple=True, metavar="VAR=N")
@click.option("--budget-exhaustive", type=int, default=None)
@click.option("--budget-samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_compare(rule_a, rule_b, widths, budget_exhaustive, budget_samples,
                seed):
    """Compare the applicability domains of two rules."""
    a = _load_rule(rule_a)
    b = _load_rule(rule_b)
    budget = _budget({}, budget_exhaustive, budget_samples, seed)
    result = pipemod.compare_generality(a, b, _parse_widths(widths), budget)
    _emit(result.to_json())
    sys.exit(EXIT_INCONCLUSIVE if result.verdict == "Inconclusive"
             else EXIT_VERIFIED)


# ---------------------------------------------------------------------------
# Bench harness

_STAGES = ("symbolic_constants", "structural", "relax", "widths")


def summarize_reports(rows: list) -> dict:
    """Aggregate (name, domain, report-or-None) rows into a BenchSummary.

    A None report marks an instance rejected at ingestion (it failed
    refinement or profitability before the pipeline ran); rejected
    instances are excluded from success denominators.
    """
    domains: dict = {}
    strategies = {s: {"effective": 0, "affected": 0} for s in _STAGES}
    instances = []
    for name, domain, report in sorted(rows, key=lambda r: (r[1], r[0])):
        d = domains.setdefault(domain, {"instances": 0, "success": 0,
                                        "rejected": 0})
        if report is None:
            d["rejected"] += 1
            instances.append({"name": name, "domain": domain,
                              "status": "rejected at ingestion"})
            continue
        d["instances"] += 1
        success = report["final"] is not None
        if success:
            d["success"] += 1
        for stage in report["stages"]:
            sid = stage["stage"]
            if sid not in strategies or stage["accepted"] is None:
                continue
            strategies[sid]["effective"] += 1
            strategies[sid]["affected"] += sum(
                v for v in stage["counts"].values()
                if isinstance(v, int))
        instances.append({"name": name, "domain": domain,
                          "status": "success" if success else "failed"})
    return {
        "schema": "peepgen-bench-1",
        "domains": domains,
        "strategies": strategies,
        "instances": instances,
        "total": {"instances": sum(d["instances"] for d in domains.values()),
                  "success": sum(d["success"] for d in domains.values()),
                  "rejected": sum(d["rejected"] for d in domains.values())},
    }


def _bench_table(summary: dict) -> str:
    lines = [f"{'domain':8s} {'instances':>9s} {'success':>7s} {'rejected':>8s}"]
    for domain in sorted(summary["domains"]):
        d = summary["domains"][domain]
        lines.append(f"{domain:8s} {d['instances']:9d} {d['success']:7d} "
                     f"{d['rejected']:8d}")
    t = summary["total"]
    lines.append(f"{'total':8s} {t['instances']:9d} {t['success']:7d} "
                 f"{t['rejected']:8d}")
    lines.append("")
    lines.append(f"{'strategy':20s} {'effective':>9s} {'affected':>8s}")
    for stage in _STAGES:
        s = summary["strategies"][stage]
        lines.append(f"{stage:20s} {s['effective']:9d} {s['affected']:8d}")
    return "\n".join(lines)


def _bench_one(path: Path, domain: str, config: dict, backend_spec: str,
               budget: verifier.Budget, report_dir):
    name = path.stem
    try:
        instance = textfmt.parse_rule(path.read_text())
        diags = validate(instance)
        if diags:
            return name, domain, None
        verdict = verifier.check_refinement(instance, {}, budget)
        if verdict.kind == "refuted" or not costmod.check_profitable(instance):
            return name, domain, None
        cfg = _pipeline_config(config, backend_spec, budget)
        report = pipemod.run_pipeline(instance, cfg).to_json()
    except PeepError:
        return name, domain, None
    if report_dir:
        out = Path(report_dir) / f"{domain}_{name}.json"
        out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return name, domain, report


@cli.command("bench")
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--backend", "backend_spec", default="heuristic",
              metavar="{llm|heuristic|replay:<dir>}")
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--out", type=click.Path())
@click.option("--report-dir", type=click.Path(file_okay=False))
@click.option("--jobs", type=int, default=1)
@click.option("--seed", type=int, default=None)
def cmd_bench(dataset_dir, backend_spec, config_file, out, report_dir, jobs,
              seed):
    """Run the pipeline over a dataset directory (int/ and float/ domains)."""
    if jobs <= 0:
        raise CliError("--jobs must be positive", EXIT_USAGE)
    config = read_config(config_file) if config_file else {}
    budget = _budget(config, None, None, seed)
    _backend(backend_spec, config, budget)  # fail fast on bad spec
    if report_dir:
        Path(report_dir).mkdir(parents=True, exist_ok=True)
    tasks = []
    for domain in ("int", "float"):
        ddir = Path(dataset_dir) / domain
        if not ddir.is_dir():
            continue
        for path in sorted(ddir.glob("*.peep")):
            tasks.append((path, domain))
    if jobs == 1:
        rows = [_bench_one(p, d, config, backend_spec, budget, report_dir)
                for p, d in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                lambda t: _bench_one(t[0], t[1], config, backend_spec,
                                     budget, report_dir), tasks))
    summary = summarize_reports(rows)
    _emit(summary, out)
    click.echo(_bench_table(summary), err=True)
    sys.exit(EXIT_VERIFIED)


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except CliError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(e.code)
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    main()
