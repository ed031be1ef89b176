"""Command-line client.

Each subcommand builds the same request model the HTTP service accepts and,
by default, executes it in-process; with --server URL the request is POSTed
to a running service instead. Responses carry the artifact payloads, which
the client writes to disk verbatim, so outputs are byte-identical either way.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from .errors import HydroDataError, NumericalError, ScenarioError
from .runner import (
    EXIT_FEASIBLE,
    EXIT_INPUT_ERROR,
    EXIT_NUMERIC_ERROR,
    summary_json,
)
from .scenario import parse_scenario
from .service import app as service_app
from .service.models import (
    ConvergenceStudyRequest,
    EvaluateRequest,
    GridSearchRequest,
    OptimizeRequest,
)


def _dispatch(server: str | None, route: str, request_model, response_cls):
    if server is None:
        handler = {
            "/optimize": service_app.handle_optimize,
            "/evaluate": service_app.handle_evaluate,
            "/grid-search": service_app.handle_grid_search,
            "/convergence-study": service_app.handle_convergence_study,
        }[route]
        return handler(request_model)
    import httpx

    resp = httpx.post(server.rstrip("/") + route,
                      json=request_model.model_dump(mode="json"),
                      timeout=None)
    if resp.status_code == 400:
        raise ScenarioError(resp.json().get("detail", resp.text))
    if resp.status_code >= 500:
        raise NumericalError(resp.json().get("detail", resp.text))
    resp.raise_for_status()
    return response_cls.model_validate(resp.json())


def _write(out_dir: Path, name: str, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_bytes(text.encode("utf-8"))


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def cmd_optimize(args) -> int:
    scenario = parse_scenario(args.scenario)
    req = OptimizeRequest(scenario=scenario, seed=args.seed, method=args.method)
    from .service.models import OptimizeResponse

    resp = _dispatch(args.server, "/optimize", req, OptimizeResponse)
    out = Path(args.out)
    _write(out, "history.csv", resp.history_csv)
    _write(out, "device_map.csv", resp.device_map_csv)
    _write(out, "summary.json", summary_json(resp.summary))
    # wall time is machine-dependent; kept out of the deterministic summary
    _write(out, "timing.json",
           json.dumps({"wall_time_s": resp.wall_time_s}, indent=2) + "\n")
    status = "feasible" if resp.feasible else "infeasible at iteration cap"
    print(f"{status}; expected power "
          f"{resp.summary['expected_power_w']:.6g} W; artifacts in {out}",
          file=sys.stderr)
    return resp.exit_code


def cmd_evaluate(args) -> int:
    scenario = parse_scenario(args.scenario)
    req = EvaluateRequest(scenario=scenario,
                          damping_ns_m=_float_list(args.damping),
                          stiffness_n_m=_float_list(args.stiffness),
                          n_check=args.n_check)
    from .service.models import EvaluateResponse

    resp = _dispatch(args.server, "/evaluate", req, EvaluateResponse)
    text = json.dumps(resp.report, indent=2) + "\n"
    if args.out is not None:
        _write(Path(args.out), "evaluation.json", text)
    else:
        sys.stdout.write(text)
    return EXIT_FEASIBLE


def cmd_grid_search(args) -> int:
    scenario = parse_scenario(args.scenario)
    req = GridSearchRequest(scenario=scenario, c_min=args.c_min,
                            c_max=args.c_max, s_min=args.s_min,
                            s_max=args.s_max, resolution=args.resolution,
                            n_check=args.n_check)
    from .service.models import GridSearchResponse

    resp = _dispatch(args.server, "/grid-search", req, GridSearchResponse)
    out = Path(args.out)
    _write(out, "grid.csv", resp.grid_csv)
    _write(out, "grid_summary.json", json.dumps(resp.summary, indent=2) + "\n")
    if resp.best is None:
        print("no feasible grid point found", file=sys.stderr)
    else:
        print(f"best feasible point: c={resp.best['c_ns_m']:.6g} N s/m, "
              f"s={resp.best['s_n_m']:.6g} N/m, "
              f"power={resp.best['power_w']:.6g} W", file=sys.stderr)
    return EXIT_FEASIBLE


def cmd_convergence_study(args) -> int:
    scenario = parse_scenario(args.scenario)
    req = ConvergenceStudyRequest(
        scenario=scenario, method=args.method,
        n_values=[int(v) for v in args.n_values.split(",")],
        n_seeds=args.seeds, n_ref=args.n_ref, mu_scale=args.mu_scale,
        tau_in=args.tau_in, unconstrained=args.unconstrained)
    from .service.models import ConvergenceStudyResponse

    resp = _dispatch(args.server, "/convergence-study", req,
                     ConvergenceStudyResponse)
    out = Path(args.out)
    _write(out, "study.csv", resp.study_csv)
    _write(out, "study_summary.json", json.dumps(resp.summary, indent=2) + "\n")
    print(f"fitted log-log slope: {resp.summary['slope']:.4g}", file=sys.stderr)
    return EXIT_FEASIBLE


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("wecpark.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wecpark",
        description="Robust control optimization for wave-energy converter "
                    "arrays")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--scenario", required=True, help="scenario YAML/JSON")
        p.add_argument("--server", default=None,
                       help="service URL; omit to run in-process")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p_opt = sub.add_parser("optimize", help="run the penalty-loop optimization")
    common(p_opt)
    p_opt.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_opt.add_argument("--method", choices=["sa", "saa-mc", "saa-gl"],
                       default=None, help="override the scenario method")
    p_opt.set_defaults(func=cmd_optimize)

    p_eval = sub.add_parser("evaluate",
                            help="evaluate fixed controls, no optimization")
    common(p_eval, out_required=False)
    p_eval.add_argument("--out", default=None, help="output directory "
                        "(default: print to stdout)")
    p_eval.add_argument("--damping", required=True,
                        help="comma-separated damping values (N s/m)")
    p_eval.add_argument("--stiffness", required=True,
                        help="comma-separated stiffness values (N/m)")
    p_eval.add_argument("--n-check", type=int, default=None)
    p_eval.set_defaults(func=cmd_evaluate)

    p_grid = sub.add_parser("grid-search",
                            help="exhaustive (c, s) search, single device")
    common(p_grid)
    p_grid.add_argument("--c-min", type=float, required=True)
    p_grid.add_argument("--c-max", type=float, required=True)
    p_grid.add_argument("--s-min", type=float, required=True)
    p_grid.add_argument("--s-max", type=float, required=True)
    p_grid.add_argument("--resolution", type=int, default=200)
    p_grid.add_argument("--n-check", type=int, default=None)
    p_grid.set_defaults(func=cmd_grid_search)

    p_study = sub.add_parser("convergence-study",
                             help="quadrature convergence study")
    common(p_study)
    p_study.add_argument("--method", choices=["saa-mc", "saa-gl"],
                         default="saa-mc")
    p_study.add_argument("--n-values", default="4,8,16,32,64,128",
                         help="comma-separated node counts")
    p_study.add_argument("--seeds", type=int, default=10,
                         help="seeds per node count (Monte Carlo)")
    p_study.add_argument("--n-ref", type=int, default=64)
    p_study.add_argument("--mu-scale", type=float, default=100.0)
    p_study.add_argument("--tau-in", type=float, default=1e-6)
    p_study.add_argument("--unconstrained", action="store_true")
    p_study.set_defaults(func=cmd_convergence_study)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, HydroDataError, ValidationError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
