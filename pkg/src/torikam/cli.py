"""Command line front door: analyze, solve, kam, search, verify.

Exit codes (stable):
  0  success
  1  structured failure (obstruction, non-converged KAM run, failed suite, bad database entry)
  2  usage or input error (bad flags, unreadable or malformed input)
"""

from __future__ import annotations

import contextlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class InputError(click.ClickException):
    exit_code = EXIT_USAGE


@dataclass
class RunConfig:
    """Everything needed to reproduce a run; written next to every artifact."""

    command: str
    inputs: list[str] = field(default_factory=list)
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    def to_json(self) -> dict:
        return {"schema": "torikam.run-config/1", "version": __version__, **asdict(self)}


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------

def _read_json(path: str | None, what: str = "input"):
    if path is None:
        return None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from exc
    if not text.strip():
        raise InputError(f"{what} {path} is empty")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"parse error in {path} at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _matrix(data, where: str):
    from .intmat import IntMatrix

    try:
        return IntMatrix.from_json(data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: not a unimodular integer matrix ({exc})") from exc


def _spec(data, where: str = "input"):
    """A bare matrix becomes a one-generator action named A."""
    from .algebra import ActionSpec

    if isinstance(data, list):
        m = _matrix(data, where)
        return ActionSpec(m.dim, {"A": m})
    if isinstance(data, dict) and "matrix" in data:
        m = _matrix(data["matrix"], where)
        return ActionSpec(m.dim, {"A": m})
    if isinstance(data, dict) and "generators" in data:
        try:
            return ActionSpec.from_json(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{where}: invalid action ({exc})") from exc
    raise InputError(f"{where}: expected a matrix or an action with generators")


def _emit(obj: dict, output: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    if output:
        Path(output).write_text(text + "\n")
    else:
        click.echo(text)


@contextlib.contextmanager
def _threads(n: int | None):
    import scipy.fft

    if not n:
        yield
        return
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass
    with scipy.fft.set_workers(n):
        yield


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="torikam")
def main():
    """Rigidity experiments for nilpotent toral actions."""


def analyze_matrix(m) -> dict:
    from .intmat import char_poly, is_ergodic, is_hyperbolic, is_unipotent
    from .spectral import PrecisionError, split

    uni, k = is_unipotent(m)
    out = {"matrix": m.to_json(), "char_poly": str(char_poly(m)), "ergodic": is_ergodic(m),
           "hyperbolic": is_hyperbolic(m), "unipotent": uni, "unipotent_index": k if uni else None}
    try:
        sp = split(m)
        out["split"] = {"dims": list(sp.dims), "rho": float(sp.rho)}
    except (PrecisionError, ValueError) as exc:
        out["split"] = {"error": str(exc)}
    return out


def analyze_action(spec, radius: int = 2) -> dict:
    from .algebra import is_genuinely_partially_hyperbolic, is_higher_rank, lower_central_series

    out = {"schema": "torikam.analysis/1", "dim": spec.dim,
           "generators": {k: analyze_matrix(v) for k, v in spec.generators.items()}}
    series = lower_central_series(spec)
    out["nilpotency_length"] = series.length
    names = spec.names()
    if len(names) >= 2:
        hr = is_higher_rank(spec.generators[names[0]], spec.generators[names[1]])
        out["higher_rank"] = {"pair": names[:2], "passed": hr.passed, "tau": hr.tau}
        ph = is_genuinely_partially_hyperbolic(spec, radius)
        out["genuinely_partially_hyperbolic"] = ph.passed
    return out


@main.command()
@click.option("--input", "input_path", required=True, help="Matrix or action JSON.")
@click.option("--output", default=None, help="Report path (stdout when omitted).")
@click.option("--radius", default=2, show_default=True, help="Word-ball radius for the PH scan.")
def analyze(input_path, output, radius):
    """Ergodicity, unipotency, hyperbolicity, spectral split and nilpotency scan."""
    spec = _spec(_read_json(input_path), input_path)
    _emit(analyze_action(spec, radius), output)


@main.command()
@click.option("--input", "input_path", required=True, help='JSON with "theta" (Fourier map), "p" and "q" matrices.')
@click.option("--output", default=None, help="Path for the solution or the obstruction report.")
@click.option("--tol", default=1e-9, show_default=True, help="Obstruction tolerance.")
def solve(input_path, output, tol):
    """Solve P w - w o Q = theta; exit 1 with an obstruction report when it is not a coboundary."""
    from .cohomology import NotErgodicError, ObstructionError, solve_twisted
    from .fourier import from_json, to_json

    data = _read_json(input_path)
    if not isinstance(data, dict) or not {"theta", "p", "q"} <= set(data):
        raise InputError('solve input needs keys "theta", "p" and "q"')
    p, q = _matrix(data["p"], "p"), _matrix(data["q"], "q")
    try:
        theta = from_json(data["theta"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"theta: {exc}") from exc
    try:
        omega, cert = solve_twisted(theta, p, q, tol, return_certificate=True)
    except NotErgodicError as exc:
        raise InputError(str(exc)) from exc
    except ObstructionError as exc:
        _emit({"status": "obstructed", "tol": tol, "report": exc.report.to_json()}, output)
        sys.exit(EXIT_FAIL)
    _emit({"status": "solved", "omega": to_json(omega), "certificate": cert.to_json()}, output)


def _kam_action(cfg: dict):
    from .families import t2_pair, theorem2_family
    from .kam import conjugated_family

    family = cfg.get("family", "theorem2")
    if "action" in cfg:
        spec = _spec(cfg["action"], "action")
    elif family == "theorem2":
        spec = theorem2_family(int(cfg.get("n_blocks", 2)))
    elif family == "t2":
        spec = t2_pair()
    else:
        raise InputError(f"unknown family {family}")
    kw = {k: cfg[k] for k in ("grid_size", "method", "ergodic", "l", "gate") if cfg.get(k) is not None}
    return conjugated_family(spec, float(cfg.get("eps", 1e-3)), seed=int(cfg.get("seed", 0)),
                             radius=float(cfg.get("omega_radius", 1.5)), count=int(cfg.get("count", 3)),
                             trunc_radius=cfg.get("trunc_radius", 8), **kw)


@main.command()
@click.option("--input", "input_path", default=None, help="Run config JSON (family, eps, trunc_radius, ...).")
@click.option("--output", default="kam-out", show_default=True, help="Output directory.")
@click.option("--tol", default=None, type=float, help="Target error (overrides config).")
@click.option("--radius", default=None, type=float, help="Truncation radius (overrides config).")
@click.option("--grid", default=None, type=int, help="Grid size per axis (overrides config).")
@click.option("--iters", default=None, type=int, help="Iteration cap (overrides config).")
@click.option("--seed", default=None, type=int, help="Seed of the conjugating displacement.")
@click.option("--threads", default=None, type=int, help="Worker cap for FFTs and kernels.")
@click.option("--timing/--no-timing", default=False, show_default=True,
              help="Fill the seconds column; off keeps reruns byte-identical.")
def kam(input_path, output, tol, radius, grid, iters, seed, threads, timing):
    """Run the KAM iteration on a conjugated action; writes kam.csv and conjugacy.json."""
    from .fourier import to_json
    from .kam import SmallnessGateError, kam_run, propagate_conjugacy, write_csv

    cfg = dict(_read_json(input_path, "config") or {})
    for key, val in (("target", tol), ("trunc_radius", radius), ("grid_size", grid), ("max_iters", iters),
                     ("seed", seed)):
        if val is not None:
            cfg[key] = val
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    rc = RunConfig("kam", [input_path] if input_path else [], cfg, int(cfg.get("seed", 0)), str(out))
    (out / "config.json").write_text(json.dumps(rc.to_json(), indent=2, sort_keys=True) + "\n")
    with _threads(threads):
        pa = _kam_action(cfg)
        try:
            run = kam_run(pa, max_iters=int(cfg.get("max_iters", 8)), target=float(cfg.get("target", 1e-12)))
        except SmallnessGateError as exc:
            _emit({"status": "gate", "message": str(exc)}, str(out / "conjugacy.json"))
            click.echo(f"gate refused: {exc}", err=True)
            sys.exit(EXIT_FAIL)
        write_csv(run, out / "kam.csv", timing=timing)
        prop = propagate_conjugacy(pa, run.displacement) if run.status == "converged" else None
    _emit({"schema": "torikam.conjugacy/1", "status": run.status, "errors": run.errors, "l": pa.l,
           "diagnostics": run.diagnostics, "displacement": to_json(run.displacement), "propagation": prop},
          str(out / "conjugacy.json"))
    click.echo(f"status={run.status} iterations={len(run.reports) - 1} final_error={run.errors[-1]:.3e}")
    if run.status != "converged":
        sys.exit(EXIT_FAIL)


@main.command()
@click.option("--degree", default=6, show_default=True, help="Even polynomial degree.")
@click.option("--bound", default=3, show_default=True, help="Coefficient bound.")
@click.option("--assemble/--no-assemble", default=False, help="Also search each seed for a higher-rank partner.")
@click.option("--output", default=None, help="JSON-lines recipe database (with --assemble) or JSON list.")
@click.option("--input", "input_path", default=None, help="Recipe database to re-verify instead of searching.")
@click.option("--threads", default=None, type=int, help="Worker cap.")
def search(degree, bound, assemble, output, input_path, threads):
    """Reciprocal non-hyperbolic ergodic companions, optionally assembled into certified actions."""
    from .families import assemble_higher_rank_ph, read_database, search_reciprocal_nonhyperbolic, write_database
    from .intmat import char_poly

    if input_path:
        try:
            rows = read_database(input_path)
        except json.JSONDecodeError as exc:
            raise InputError(f"parse error in {input_path} at line {exc.lineno} column {exc.colno}: {exc.msg}")
        except OSError as exc:
            raise InputError(f"cannot read {input_path}: {exc.strerror}") from exc
        bad = [i for i, (_, ok) in enumerate(rows) if not ok]
        click.echo(f"verified {len(rows) - len(bad)}/{len(rows)} recipes")
        sys.exit(EXIT_FAIL if bad else EXIT_OK)
    if degree < 2 or degree % 2:
        raise InputError("degree must be even and at least 2")
    with _threads(threads):
        seeds = search_reciprocal_nonhyperbolic(degree, bound)
        if not assemble:
            _emit({"schema": "torikam.search/1", "degree": degree, "bound": bound,
                   "results": [{"char_poly": str(char_poly(s)), "companion": s.to_json()} for s in seeds]}, output)
            return
        recipes = [r for r in (assemble_higher_rank_ph(s) for s in seeds) if r is not None]
    if output:
        write_database(output, recipes)
    else:
        for r in recipes:
            click.echo(json.dumps(r.to_json(), sort_keys=True))
    click.echo(f"{len(seeds)} seeds, {len(recipes)} certified recipes", err=True)


def _suite_inputs(name: str, data):
    from .families import noncommuting_square_zero, theorem2_family, unit_pair_t3

    if data is None:
        if name == "growth":
            a, b = unit_pair_t3()
            return {"a": a, "b": b}
        spec = theorem2_family()
        g = spec.generators
        if name == "unipotent":
            return {"f": g["A1"], "q": g["A2"]}
        if name in ("displacement", "e-set"):
            xs = {"A2": g["A2"], "A3": g["A3"], "X": noncommuting_square_zero()}
            return {"a": g["A1"], "xs": xs, "n": None if name == "displacement" else 1}
        return {}
    if not isinstance(data, dict):
        raise InputError("suite input must be a JSON object")
    out = {}
    for key, val in data.items():
        if key in ("a", "b", "f", "q"):
            out[key] = _matrix(val, key)
        elif key == "xs":
            out[key] = {k: _matrix(v, k) for k, v in val.items()}
        else:
            out[key] = val
    return out


@main.command()
@click.argument("suite", type=click.Choice(["growth", "unipotent", "displacement", "e-set", "obstruction"]))
@click.option("--input", "input_path", default=None, help="Suite input JSON; bundled examples when omitted.")
@click.option("--output", default=None, help="JSON report path.")
@click.option("--radius", default=None, type=float, help="Sample ball radius.")
@click.option("--seed", default=0, show_default=True, help="Sampling seed.")
@click.option("--threads", default=None, type=int, help="Worker cap.")
def verify(suite, input_path, output, radius, seed, threads):
    """Run a verifier suite and print its pass/fail table."""
    from . import verify as V

    ins = _suite_inputs(suite, _read_json(input_path, "suite input"))
    with _threads(threads):
        try:
            if suite == "growth":
                res = V.growth_suite(ins["a"], ins["b"], **({"v_radius": radius} if radius else {}))
            elif suite == "unipotent":
                res = V.unipotent_suite(ins["f"], ins["q"], **({"v_radius": radius} if radius else {}))
            elif suite == "displacement":
                res = V.displacement_suite(ins["a"], ins["xs"], ins.get("n"), radius=radius or 30, seed=seed)
            elif suite == "e-set":
                res = V.e_set_suite(ins["a"], ins["xs"], int(ins.get("n") or 1), radius=radius or 20, seed=seed)
            else:
                from .families import t2_pair
                from .kam import conjugated_family

                pa = conjugated_family(t2_pair(), float(ins.get("eps", 1e-3)), seed=seed, trunc_radius=8)
                res = V.obstruction_suite(pa, radius=radius or 4, seed=seed)
        except KeyError as exc:
            raise InputError(f"suite {suite} input is missing {exc}") from exc
    click.echo(res.table())
    if output:
        _emit(res.to_json(), output)
    if not res.passed:
        sys.exit(EXIT_FAIL)


if __name__ == "__main__":
    main()
