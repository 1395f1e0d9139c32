"""
Command-line interface for hetren.

Commands:
- hetren check-model CONFIG: model invariants, spectral condition, transversality and tangency
- hetren search-sojourn CONFIG: sojourn schedule for the configured target
- hetren renormalize CONFIG: convergence report (CSV, JSON, SVG) under --out-dir
- hetren certify CONFIG: blender certificate (JSON) under --out-dir
- hetren orbit: orbit of G or E as CSV

Exit codes: 0 success, 1 invariant or certification failure, 2 config error,
3 sojourn search failure, 4 composition failure.
"""
import csv
import functools
import io
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

import click
import colorama

from blender_cert import certify_scheme, passes
from cycle_model import ModelConfig, check_quasi_transverse, check_tangency
from errors import (
    ConfigError,
    DegenerateModel,
    HetrenError,
    ModelInvariantError,
    ScheduleUnverified,
    SojournNotFound,
)
from henon_limit import EParams, HenonParams, SigmaVector, iterate_endomorphism
from precision import PRECISION_MODES, PrecisionSetting, ScalarContext, Vec3
from renorm_engine import RenormReport, convergence_report, make_grid
from report_tables import BANNER, certificate_table, checks_table, decay_table, renorm_table, schedule_table
from sojourn_search import (
    VERIFY_DIGITS,
    SojournSchedule,
    build_schedule,
    check_spectral,
    tau_of,
    verify_schedule,
)

logger = logging.getLogger(__name__)

__version__ = "0.1.0"

MANIFEST_NAME = "manifest.json"
SVG_HASH_SALT = "hetren"
PLOT_SERIES = [
    ("sup_c0_error", "sup C0 error"),
    ("sup_c1_error", "sup C1 error"),
    ("prod_target_gap", "|σ_P^m λ_Q^n - ξ/τ|"),
    ("lp_s2m_s2n", "λ_P^m σ_P^2m σ_Q^2n"),
]
ORBIT_COLUMNS = ["step", "x", "y", "z", "escaped"]


# =============================================================================
# Run settings and manifest
# =============================================================================

@dataclass(frozen=True)
class RunSettings:
    """The optional "run" section of a config file"""

    xi: float = 1.185
    mu: float = -9.5
    eps: float = 0.2
    count: int = 4
    eps0: float = 0.1
    n0: int = 5
    n_max: int = 2000
    offset_scale: float = 0.01
    grid: int = 11
    fd_step: float = 1e-5
    c0_threshold: float = 0.05

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "RunSettings":
        if data is None:
            return cls()
        if not isinstance(data, dict):
            raise ConfigError(f"'run' must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"Section 'run' has unknown fields {sorted(extra)}")
        integers = {f.name for f in fields(cls) if f.type is int}
        for key, value in data.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"run.{key} must be a number, got {value!r}")
            if key in integers and not isinstance(value, int):
                raise ConfigError(f"run.{key} must be an integer, got {value!r}")
        return cls(**data)

    def override(self, **changes: Any) -> "RunSettings":
        """Command-line values win over the config; None means not given"""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


@dataclass
class RunManifest:
    command: str
    config_path: Optional[str]
    parameters: Dict[str, Any]
    started: str
    finished: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    exit_code: int = 0
    version: str = __version__

    def record(self, path: Path) -> Path:
        self.outputs.append(path.name)
        return path

    def write(self, path: Path):
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@contextmanager
def recorded_run(out_dir: Path, command: str, config_path: Optional[Path],
                 parameters: Dict[str, Any]) -> Iterator[RunManifest]:
    """Create out_dir and write manifest.json when the block ends, failed or not"""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command, str(config_path) if config_path else None, parameters, _now())
    try:
        yield manifest
    except HetrenError as e:
        manifest.exit_code = e.exit_code
        raise
    except Exception:
        manifest.exit_code = 1
        raise
    finally:
        manifest.outputs.append(MANIFEST_NAME)
        manifest.finished = _now()
        manifest.write(out_dir / MANIFEST_NAME)


def load_config(config_path: Path) -> Tuple[ModelConfig, RunSettings]:
    try:
        data = json.loads(Path(config_path).read_text())
    except OSError as e:
        raise ConfigError(f"Cannot read config {config_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {config_path} is not valid JSON: {e}") from e
    cfg = ModelConfig.from_dict(data)
    return cfg, RunSettings.from_dict(data.get("run"))


def resolve_precision(cfg: ModelConfig, flag: Optional[str]) -> ScalarContext:
    """--precision first, then HETREN_PRECISION, then the config"""
    if flag is not None:
        return PrecisionSetting(flag, cfg.precision.dps).context()
    return cfg.precision.with_env().context()


def schedule_for(cfg: ModelConfig, settings: RunSettings) -> SojournSchedule:
    """Search the schedule, then re-check it at VERIFY_DIGITS"""
    schedule = build_schedule(
        cfg.spectrum.sigma_P,
        cfg.spectrum.lambda_Q,
        tau_of(cfg),
        settings.xi,
        settings.count,
        settings.eps0,
        n0=settings.n0,
        n_max=settings.n_max,
        offset_scale=settings.offset_scale,
    )
    problems = schedule_problems(cfg, settings, schedule)
    if problems:
        raise ScheduleUnverified(problems)
    logger.debug(f"{len(schedule)} schedule entries re-verified at {VERIFY_DIGITS} digits")
    return schedule


def schedule_problems(cfg: ModelConfig, settings: RunSettings, schedule: SojournSchedule) -> List[str]:
    return verify_schedule(schedule, cfg.spectrum.sigma_P, cfg.spectrum.lambda_Q, tau_of(cfg),
                           settings.xi, settings.eps0)


# =============================================================================
# Helpers
# =============================================================================

def exit_on_error(fn):
    """Map HetrenError to its exit code; anything else is logged and exits 1"""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except HetrenError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
        except Exception as e:
            logger.exception(f"{fn.__name__} failed")
            click.echo(f"Error: {e}", err=True)
            sys.exit(1)

    return wrapper


def _banner(title: str):
    ctx = click.get_current_context(silent=True)
    if ctx is not None and (ctx.find_root().obj or {}).get("quiet"):
        return
    click.echo(BANNER)
    click.echo(title)
    click.echo(BANNER)


def plot_errors(report: RenormReport, path: Path):
    """Log-scale error-vs-k line chart as a self-contained SVG"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ks = report.column("k")
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, label in PLOT_SERIES:
            points = [(k, v) for k, v in zip(ks, report.column(name)) if v is not None and v > 0]
            if points:
                xs, ys = zip(*points)
                ax.plot(xs, ys, marker="o", label=label)
        ax.set_yscale("log")
        ax.set_xlabel("k")
        ax.set_ylabel("value")
        ax.set_xticks(ks)
        ax.grid(True, which="both", alpha=0.3)
        if ax.get_lines():
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def orbit_csv(points: List[Vec3], escaped: bool) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ORBIT_COLUMNS)
    last = len(points) - 1
    for step, p in enumerate(points):
        flag = 1 if escaped and step == last else 0
        writer.writerow([step] + [f"{float(c):.17g}" for c in p] + [flag])
    return buf.getvalue()


def _floats(text: str, option: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}", param_hint=option) from e


def family_from_params(family: str, params: List[float]):
    """G takes xi,mu[,kappa1[,kappa2]]; E takes xi,mu,s1,s2,s3,s4,s5"""
    if family == "G":
        if not 2 <= len(params) <= 4:
            raise click.BadParameter(f"G needs 2 to 4 values, got {len(params)}", param_hint="--params")
        return HenonParams(*params)
    if len(params) != 7:
        raise click.BadParameter(f"E needs 7 values, got {len(params)}", param_hint="--params")
    return EParams(params[0], params[1], SigmaVector(*params[2:]))


# =============================================================================
# Main CLI Group
# =============================================================================

@click.group()
@click.version_option(version=__version__, prog_name="hetren")
@click.option("--verbose", "-v", is_flag=True, help="Verbose output")
@click.option("--quiet", "-q", is_flag=True, help="Only errors")
@click.pass_context
def main(ctx, verbose: bool, quiet: bool):
    """
    hetren: renormalization lab for a heterodimensional tangency

    \b
    Quick Start:
        hetren check-model default_model.json
        hetren search-sojourn default_model.json
        hetren renormalize default_model.json --out-dir out
        hetren certify default_model.json --out-dir out
    """
    colorama.just_fix_windows_console()
    if quiet:
        log_level = logging.ERROR
    elif verbose:
        log_level = logging.DEBUG
    else:
        log_level = logging.INFO
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet


# =============================================================================
# check-model
# =============================================================================

@main.command("check-model")
@click.argument("config_path", type=click.Path(exists=True, path_type=Path))
@exit_on_error
def check_model(config_path: Path):
    """Check the model invariants, the spectral condition and the transition derivatives."""
    _banner("MODEL CHECKS")
    try:
        cfg, _ = load_config(config_path)
    except ModelInvariantError as e:
        click.echo(checks_table([asdict(c) for c in e.checks]))
        raise

    rows = [asdict(c) for c in cfg.checks()]
    spectral = check_spectral(cfg.spectrum)
    rows.append({
        "tag": "e.seis",
        "description": "0 < (lambda_P^(1/2) sigma_P)^eta sigma_Q < 1",
        "passed": spectral.ok,
        "detail": f"eta={spectral.eta:.6g}, value={spectral.value:.6g}",
    })
    try:
        qt = check_quasi_transverse(cfg)
        rows.append({"tag": "transversality", "description": "Df(X)(0,1,0) = (alpha2, beta2, 0)",
                     "passed": qt.passed, "detail": f"deviation={qt.deviation:.2e}"})
    except DegenerateModel as e:
        rows.append({"tag": "transversality", "description": "Df(X)(0,1,0) = (alpha2, beta2, 0)",
                     "passed": False, "detail": str(e)})
    try:
        tangency = check_tangency(cfg)
        rows.append({"tag": "tangency", "description": "Df(Y) images (a2,0,c2), (a3,0,c2)",
                     "passed": tangency.passed, "detail": f"deviation={tangency.deviation:.2e}"})
    except DegenerateModel as e:
        rows.append({"tag": "tangency", "description": "Df(Y) images (a2,0,c2), (a3,0,c2)",
                     "passed": False, "detail": str(e)})

    click.echo(checks_table(rows))
    failed = [r["tag"] for r in rows if not r["passed"]]
    if failed:
        click.echo(f"Failed: {', '.join(failed)}", err=True)
        sys.exit(1)
    click.echo(f"All {len(rows)} checks passed")


# =============================================================================
# search-sojourn
# =============================================================================

@main.command("search-sojourn")
@click.argument("config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--xi", type=float, help="Target xi (default: run.xi)")
@click.option("--eps", type=float, help="Tolerance of the first entry, halved per entry (default: run.eps0)")
@click.option("--count", type=click.IntRange(min=0), help="Number of entries (default: run.count)")
@click.option("--n0", type=click.IntRange(min=0), help="Search starts above this n (default: run.n0)")
@click.option("--n-max", type=click.IntRange(min=1), help="Search cutoff (default: run.n_max)")
@click.option("--out", "-o", type=click.Path(path_type=Path), help="Write the schedule JSON here")
@exit_on_error
def search_sojourn(config_path: Path, xi, eps, count, n0, n_max, out: Optional[Path]):
    """Build the sojourn schedule (m_k, n_k) for the configured target."""
    cfg, settings = load_config(config_path)
    settings = settings.override(xi=xi, eps0=eps, count=count, n0=n0, n_max=n_max)
    _banner(f"SOJOURN SCHEDULE  xi={settings.xi}  eps0={settings.eps0}  target={settings.xi / tau_of(cfg):.12g}")
    schedule = schedule_for(cfg, settings)
    if len(schedule):
        click.echo(schedule_table(schedule))
        click.echo(f"All {len(schedule)} entries re-verified at {VERIFY_DIGITS} digits")
    else:
        click.echo("Empty schedule")
    if out is not None:
        schedule.to_json(out)
        click.echo(f"Schedule written to {out}")
    else:
        click.echo(schedule.to_json())


# =============================================================================
# renormalize
# =============================================================================

@main.command()
@click.argument("config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--xi", type=float, help="xi of the limit map (default: run.xi)")
@click.option("--mu", type=float, help="mu of the limit map (default: run.mu)")
@click.option("--grid", type=click.IntRange(min=1), help="Grid points per axis on [-1,1]^3 (default: run.grid)")
@click.option("--count", type=click.IntRange(min=1), help="Schedule entries (default: run.count)")
@click.option("--precision", type=click.Choice(PRECISION_MODES), help="Scalar mode (default: HETREN_PRECISION or config)")
@click.option("--schedule", "schedule_path", type=click.Path(exists=True, path_type=Path),
              help="Use this schedule JSON instead of searching")
@click.option("--order", type=click.IntRange(1, 2), default=1, show_default=True,
              help="2 also measures the C2 error")
@click.option("--cross-check/--no-cross-check", default=True, show_default=True,
              help="Compare the closed form with the direct composition")
@click.option("--out-dir", "-o", type=click.Path(path_type=Path), default=Path("hetren_out"), show_default=True)
@exit_on_error
def renormalize(config_path: Path, xi, mu, grid, count, precision, schedule_path, order: int,
                cross_check: bool, out_dir: Path):
    """Measure the convergence of the renormalized return maps to E."""
    cfg, settings = load_config(config_path)
    settings = settings.override(xi=xi, mu=mu, grid=grid, count=count)
    ctx = resolve_precision(cfg, precision)
    parameters = dict(asdict(settings), precision=ctx.describe(), order=order, cross_check=cross_check,
                      schedule=str(schedule_path) if schedule_path else None)

    _banner(f"RENORMALIZATION  xi={settings.xi}  mu={settings.mu}  grid={settings.grid}^3  {ctx!r}")
    with recorded_run(out_dir, "renormalize", config_path, parameters) as manifest:
        if schedule_path is not None:
            schedule = SojournSchedule.from_json(schedule_path)
            for problem in schedule_problems(cfg, settings, schedule):
                click.echo(f"Warning: supplied schedule fails re-verification: {problem}", err=True)
        else:
            schedule = schedule_for(cfg, settings)
        schedule.to_json(manifest.record(out_dir / "schedule.json"))

        report = convergence_report(cfg, schedule, settings.xi, settings.mu, grid=make_grid(settings.grid),
                                    fd_step=settings.fd_step, ctx=ctx, cross_check=cross_check, order=order)
        report.to_csv(manifest.record(out_dir / "report.csv"))
        manifest.record(out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        plot_errors(report, manifest.record(out_dir / "errors.svg"))

    click.echo(renorm_table(report, settings.c0_threshold))
    if report.skipped:
        click.echo(f"Skipped (not admissible): {report.skipped}")
    click.echo(f"Outputs in {out_dir}: {', '.join(manifest.outputs)}")


# =============================================================================
# certify
# =============================================================================

@main.command()
@click.argument("config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--xi", type=float, help="xi (default: run.xi)")
@click.option("--mu", type=float, help="mu (default: run.mu)")
@click.option("--eps", type=float, help="Half-width of the (kappa, eta) box (default: run.eps)")
@click.option("--grid", type=click.IntRange(min=1), help="Grid points per axis (default: run.grid)")
@click.option("--count", type=click.IntRange(min=0), help="Schedule entries; 0 skips convergence (default: run.count)")
@click.option("--precision", type=click.Choice(PRECISION_MODES), help="Scalar mode (default: HETREN_PRECISION or config)")
@click.option("--out-dir", "-o", type=click.Path(path_type=Path), default=Path("hetren_out"), show_default=True)
@exit_on_error
def certify(config_path: Path, xi, mu, eps, grid, count, precision, out_dir: Path):
    """Assemble the blender certificate for (xi, mu) and write certificate.json."""
    cfg, settings = load_config(config_path)
    settings = settings.override(xi=xi, mu=mu, eps=eps, grid=grid, count=count)
    ctx = resolve_precision(cfg, precision)
    parameters = dict(asdict(settings), precision=ctx.describe())

    _banner(f"BLENDER CERTIFICATE  xi={settings.xi}  mu={settings.mu}  eps={settings.eps}")
    search_error: Optional[SojournNotFound] = None
    with recorded_run(out_dir, "certify", config_path, parameters) as manifest:
        try:
            schedule = schedule_for(cfg, settings)
        except SojournNotFound as e:
            logger.error(f"sojourn search failed: {e.diagnostic}")
            schedule, search_error = None, e
        cert = certify_scheme(cfg, settings.xi, settings.mu, settings.eps, schedule,
                              grid=make_grid(settings.grid), ctx=ctx,
                              c0_threshold=settings.c0_threshold, fd_step=settings.fd_step)
        if search_error is not None:
            cert.warnings.append(f"sojourn search failed: {search_error.diagnostic}")
            manifest.exit_code = search_error.exit_code
        elif not passes(cert, settings.c0_threshold):
            manifest.exit_code = 1
        cert.to_json(manifest.record(out_dir / "certificate.json"))

    click.echo(certificate_table(cert))
    if cert.decay:
        click.echo(decay_table(cert.decay))
    for warning in cert.warnings:
        click.echo(f"Warning: {warning}", err=True)
    click.echo(f"Verdict: {cert.verdict} (grade: {cert.grade})")
    if search_error is not None:
        click.echo(f"Error: {search_error}", err=True)
    sys.exit(manifest.exit_code)


# =============================================================================
# orbit
# =============================================================================

@main.command()
@click.option("--family", type=click.Choice(["G", "E"]), required=True, help="G or E")
@click.option("--params", "params_text", required=True,
              help="G: xi,mu[,kappa1[,kappa2]]   E: xi,mu,s1,s2,s3,s4,s5")
@click.option("--start", "start_text", default="0,0,0", show_default=True, help="x,y,z")
@click.option("--steps", type=click.IntRange(min=0), default=100, show_default=True)
@click.option("--escape-bound", type=float, default=1e6, show_default=True)
@click.option("--out", "-o", type=click.Path(path_type=Path), help="CSV path (default: stdout)")
@exit_on_error
def orbit(family: str, params_text: str, start_text: str, steps: int, escape_bound: float,
          out: Optional[Path]):
    """Iterate G or E and emit the orbit as CSV; an escape is flagged on the last row."""
    start = _floats(start_text, "--start")
    if len(start) != 3:
        raise click.BadParameter(f"expected 3 coordinates, got {len(start)}", param_hint="--start")
    fam = family_from_params(family, _floats(params_text, "--params"))
    result = iterate_endomorphism(fam, Vec3(*start), steps, escape_bound=escape_bound)
    text = orbit_csv(result.points, result.escaped)
    if out is None:
        click.echo(text, nl=False)
        return
    out.write_text(text)
    if result.escaped:
        logger.info(f"orbit escaped at step {result.escape_step}")
    logger.info(f"{len(result.points)} points written to {out}")


if __name__ == "__main__":
    main()
