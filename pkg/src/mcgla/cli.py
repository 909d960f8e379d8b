"""Command line front end.

Every subcommand writes its results into ``--out`` together with a
``manifest.json`` (package and library versions, the configuration echo,
SHA-256 checksums of inputs and outputs).  Outputs contain no timestamps,
so re-running a manifest reproduces them byte for byte.

Exit codes: 0 success, 2 invalid configuration, 3 violated precondition,
4 numerical failure.  MCGLA_THREADS caps the BLAS/OpenMP thread count.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config_error(msg: str) -> CliError:
    return CliError(EXIT_CONFIG, msg)


# --------------------------------------------------------------------------
# output helpers


class Output:
    """Collects the files of one run and writes the manifest last."""

    def __init__(self, directory: str):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: dict = {}
        self.figures: dict = {}
        self.inputs: dict = {}

    def _record(self, name: str, data: bytes, table: dict) -> Path:
        path = self.dir / name
        path.write_bytes(data)
        table[name] = hashlib.sha256(data).hexdigest()
        return path

    def json(self, name: str, obj) -> Path:
        text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
        return self._record(name, text.encode(), self.files)

    def csv(self, name: str, header: list, rows) -> Path:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        return self._record(name, ("\n".join(lines) + "\n").encode(), self.files)

    def binary(self, name: str, data: bytes) -> Path:
        return self._record(name, data, self.files)

    def figure(self, name: str, fig) -> None:
        import io

        buf = io.BytesIO()
        fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
        self._record(name, buf.getvalue(), self.figures)

    def input(self, path: str) -> None:
        self.inputs[path] = hashlib.sha256(Path(path).read_bytes()).hexdigest()

    def manifest(self, command: str, config: dict, status: int) -> None:
        import numpy
        import scipy

        from . import __version__

        versions = {"mcgla": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
                    "scipy": scipy.__version__}
        try:
            import gmpy2

            versions["gmpy2"] = gmpy2.version()
        except ImportError:
            versions["gmpy2"] = None
        man = {"command": command, "config": config, "versions": versions, "inputs": self.inputs,
               "outputs": dict(sorted(self.files.items())), "figures": dict(sorted(self.figures.items())),
               "exit_status": status}
        text = json.dumps(man, indent=2, sort_keys=True) + "\n"
        (self.dir / "manifest.json").write_text(text)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


def _json_default(o):
    try:
        import numpy as np

        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
    except ImportError:
        pass
    return str(o)


def _load_json(path: str, out: Output):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise _config_error(f"no such file: {path}")
    except json.JSONDecodeError as e:
        raise _config_error(f"{path} is not valid JSON: {e}")
    out.input(path)
    return data


def _floats(text: str, count: int | None = None, name: str = "value") -> list:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise _config_error(f"cannot parse {name} {text!r}")
    if count is not None and len(vals) != count:
        raise _config_error(f"{name} needs {count} comma-separated numbers")
    return vals


def _span(text: str) -> tuple:
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise _config_error(f"tau span must look like 0:20, got {text!r}")
    if a == b:
        raise _config_error("tau span is empty")
    return a, b


def _positive(x: float, name: str) -> float:
    if not x > 0:
        raise _config_error(f"{name} must be positive")
    return x


# --------------------------------------------------------------------------
# exact inputs


def _rational(v):
    from .scalar import q

    try:
        return q(str(v))
    except Exception:
        raise _config_error(f"not a rational number: {v!r}")


def _ring_from(cfg: dict):
    """A Ring with the constants of ``cfg["constants"]`` ({name: {"square": r}})."""
    from .scalar import Ring

    R = Ring()
    for name, c in (cfg.get("constants") or {}).items():
        sq = c.get("square") if isinstance(c, dict) else None
        R.constant(name, square=None if sq is None else _rational(sq))
    return R


def _coef(R, c):
    from .scalar import from_json

    if isinstance(c, dict):
        return from_json(R, c)
    if isinstance(c, str) and c.isidentifier():
        if c not in R._gens:
            raise _config_error(f"unknown constant {c!r}; declare it under 'constants'")
        return _const_expr(R, c)
    return R.coerce(_rational(c))


def _const_expr(R, name):
    from .scalar import CONST, Expr, Q

    return Expr(R, {(((CONST, name), 1),): Q(1)})


def _p0(R, cfg: dict):
    if "p0_squared" in cfg:
        R.constant("p0", square=_rational(cfg["p0_squared"]))
        return _const_expr(R, "p0")
    if "p0" in cfg:
        return R.coerce(_rational(cfg["p0"]))
    raise _config_error("need p0 or p0_squared")


def parse_element(cfg: dict, R=None):
    """Element from JSON: a ``kasner`` preset, a list of ``terms``, or canonical ``coeffs``."""
    from . import gla, mc

    R = R or _ring_from(cfg)
    if "p" in cfg and "kasner" not in cfg:
        R.bind_p([_rational(x) for x in cfg["p"]])
    if "kasner" in cfg:
        k = cfg["kasner"]
        p = [_rational(x) for x in k.get("p", [])]
        if len(p) != 3:
            raise _config_error("kasner needs three exponents p")
        R.bind_p(p)
        return mc.kasner_element(R, p, _p0(R, k)), R
    if "coeffs" in cfg:
        try:
            return gla.from_json(R, cfg), R
        except (KeyError, TypeError, ValueError) as e:
            raise _config_error(f"malformed canonical element: {e}")
    if "terms" in cfg:
        alg = gla.get_algebra()
        x = gla.GlaElement()
        for t in cfg["terms"]:
            c = _coef(R, t.get("coef", 1))
            try:
                if "l" in t:
                    x = x + alg.element(t["l"], c)
                elif "phi" in t:
                    x = x + alg.element(t["phi"], c, kind="P")
                elif "basis" in t:
                    x = x + gla.GlaElement({alg.find(t["basis"]) if isinstance(t["basis"], str) else int(t["basis"]): c})
                else:
                    raise _config_error(f"term needs l, phi or basis: {t}")
            except (KeyError, ValueError) as e:
                raise _config_error(f"bad term {t}: {e}")
        return x, R
    raise _config_error("element file needs 'kasner', 'terms' or 'coeffs'")


def parse_tuple(cfg: dict):
    """DataTuple from JSON: a ``homogeneous`` preset or a canonical ``tuple``."""
    from . import mc

    R = _ring_from(cfg)
    if "homogeneous" in cfg:
        h = cfg["homogeneous"]
        p = [_rational(x) for x in h.get("p", [])]
        c = [_rational(x) for x in h.get("c", [0, 0, 0])]
        if len(p) != 3 or len(c) != 3:
            raise _config_error("homogeneous needs three p and three c")
        return mc.homogeneous_tuple(R, p, _p0(R, h), c)
    if "tuple" in cfg:
        try:
            return mc.DataTuple.from_json(R, cfg["tuple"])
        except (KeyError, TypeError) as e:
            raise _config_error(f"malformed tuple: {e}")
    raise _config_error("tuple file needs 'homogeneous' or 'tuple'")


def _element_report(x) -> list:
    from .gla import get_algebra

    alg = get_algebra()
    return [{"basis_id": b, "label": alg.basis[b].label, "degree": alg.deg[b], "coefficient": str(c)}
            for b, c in sorted(x.coeffs.items())]


# --------------------------------------------------------------------------
# subcommands


def cmd_bracket(args, out: Output) -> int:
    from . import gla

    sx = _load_json(args.x, out)
    sy = _load_json(args.y, out)
    R = _ring_from({"constants": {**(sx.get("constants") or {}), **(sy.get("constants") or {})}})
    x, _ = parse_element(sx, R)
    y, _ = parse_element(sy, R)
    z = gla.bracket(x, y)
    out.json("bracket.json", gla.to_json(z) if not z.is_zero() else {"coeffs": [], "degree": None})
    out.json("bracket_report.json", {"zero": z.is_zero(), "components": _element_report(z)})
    print(f"[x, y]: {len(z.coeffs)} nonzero components" if not z.is_zero() else "[x, y] = 0 exactly")
    return EXIT_OK


def cmd_mc_check(args, out: Output) -> int:
    from . import mc

    cfg = _load_json(args.element, out)
    x, _ = parse_element(cfg)
    r = mc.mc_residual(x)
    status = "exact zero" if r.is_zero() else "nonzero"
    out.json("residual.json", {"status": status, "components": _element_report(r)})
    print(f"residual: {status}" + ("" if r.is_zero() else f" ({len(r.coeffs)} components)"))
    return EXIT_OK


def cmd_grade(args, out: Output) -> int:
    from . import filtration as fl

    cfg = _load_json(args.element, out)
    x, _ = parse_element(cfg)
    rows = _element_report(x)
    for r in rows:
        r["grade"] = list(fl.grade_of(r["basis_id"]))
    report = {"components": rows}
    if args.alpha:
        alpha = tuple(int(a) for a in _floats(args.alpha, 3, "alpha"))
        report["alpha"] = list(alpha)
        report["in_filtration"] = fl.in_filtration(x, alpha)
    out.json("grades.json", report)
    for r in rows:
        print(f"{r['label']:>24}  degree {r['degree']}  grade {tuple(r['grade'])}")
    return EXIT_OK


def cmd_formal_solve(args, out: Output) -> int:
    from . import formal as fm
    from . import mc

    cfg = _load_json(args.tuple, out)
    if args.order < 0:
        raise _config_error("order must be non-negative")
    t = parse_tuple(cfg)
    log: list = []
    try:
        gamma = fm.formal_solve(t, args.order, log=log)
    except fm.FormalError as e:
        raise CliError(EXIT_PRECONDITION, str(e))
    except mc.GaugeError as e:
        raise CliError(EXIT_PRECONDITION, str(e))
    residual = mc.mc_residual(gamma, args.order)
    audit = {
        "order": args.order,
        "residual_zero_through_order": residual.is_zero(),
        "odd_defects": [list(a) for a in fm.odd_defects(gamma)],
        "denominator_defects": [[list(a), b] for a, b in fm.denominator_defects(gamma)],
        "support": [list(a) for a in gamma.support()],
    }
    out.json("series.json", gamma.to_json())
    out.json("audit.json", audit)
    out.csv("solve_log.csv", ["n1", "n2", "n3", "beta1", "beta2", "beta3", "tau_degree", "nonzero"],
            [(*r.n, *r.beta, r.tau_degree, int(r.nonzero)) for r in log])
    print(f"solved through order {args.order}; residual {'vanishes' if residual.is_zero() else 'NONZERO'}")
    return EXIT_OK if residual.is_zero() else EXIT_NUMERICAL


def cmd_constraints(args, out: Output) -> int:
    import numpy as np

    from . import constraints as C

    p = _floats(args.p, 3, "p")
    if args.kmax < 1:
        raise _config_error("kmax must be at least 1")
    _positive(args.epsilon, "epsilon")
    _positive(args.tol, "tol")
    split = C.Splitting.build(p, args.kmax)
    u = C.random_u(split, args.epsilon, args.seed)
    try:
        sol = C.solve_graph(u, split, tol=args.tol)
    except C.ConstraintError as e:
        code = EXIT_PRECONDITION if "smallness" in str(e) else EXIT_NUMERICAL
        raise CliError(code, str(e))
    out.csv("convergence.csv", ["iteration", "residual"], [(i + 1, r) for i, r in enumerate(sol.history)])
    sig = C.quadric_signature(C.Splitting.build(p, 1))
    B0 = C.quadric_map(np.zeros_like(u), split)
    report = {
        "p": p, "kmax": args.kmax, "epsilon": args.epsilon, "seed": args.seed,
        "iterations": sol.iterations, "final_residual": sol.residual, "contraction": sol.contraction,
        "B_at_zero": float(np.max(np.abs(B0))), "linear_part_norm": C.linear_part_norm(C.Splitting.build(p, 1)),
        "cross_block_max": sig.cross_max,
        "blocks": {str(i): {"dimension": sig.dims[i], "indefinite": bool(sig.indefinite[i]),
                            "min_eigenvalue": float(np.min(sig.eigenvalues[i])),
                            "max_eigenvalue": float(np.max(sig.eigenvalues[i]))} for i in sorted(sig.dims)},
    }
    out.json("signature.json", report)
    if args.figures:
        plt = _pyplot()
        fig, ax = plt.subplots()
        ax.semilogy(range(1, len(sol.history) + 1), sol.history, "o-")
        ax.set_xlabel("iteration")
        ax.set_ylabel("residual")
        out.figure("convergence.png", fig)
    print(f"converged in {sol.iterations} iterations, residual {sol.residual:.3g}")
    return EXIT_OK


def cmd_ode(args, out: Output) -> int:
    import numpy as np

    from . import homogeneous as Hm

    c = [int(round(v)) for v in _floats(args.c, 3, "c")]
    tau = _span(args.tau)
    cfg = _load_json(args.init, out)
    ans = Hm.extract_odes(*c)
    try:
        if "kasner" in cfg:
            y0 = Hm.kasner_state(ans, cfg["kasner"])
        elif "given" in cfg:
            y0 = Hm.complete_state(ans, cfg["given"])
        elif "state" in cfg:
            missing = set(ans.names) - set(cfg["state"])
            if missing:
                raise _config_error(f"state misses {sorted(missing)}")
            y0 = np.array([float(cfg["state"][n]) for n in ans.names])
        else:
            raise _config_error("init file needs 'kasner', 'given' or 'state'")
        tr = Hm.integrate(ans, y0, tau, samples=args.samples)
    except Hm.HomogeneousError as e:
        msg = str(e)
        raise CliError(EXIT_NUMERICAL if "integration stopped" in msg else EXIT_PRECONDITION, msg)
    header = ["tau", "t", "log_A"] + ans.names + ["constraint_norm", "mc_norm"]
    rows = [(tr.tau[j], tr.t[j], tr.log_A[j], *tr.y[:, j], tr.constraint_norm[j], tr.mc_norm[j])
            for j in range(len(tr.tau))]
    out.csv("trajectory.csv", header, rows)
    summary = {"c": c, "tau": list(tau), "max_mc_norm": float(np.max(tr.mc_norm)),
               "max_constraint_norm": float(np.max(tr.constraint_norm)), "initial_state": dict(zip(ans.names, y0))}
    try:
        fit = Hm.kasner_exponents(ans, tr)
        summary["kasner_exponents"] = {"P": fit.exponents.tolist(), "sum": fit.total, "t_end": fit.t_end}
    except Hm.HomogeneousError as e:
        summary["kasner_exponents"] = {"unavailable": str(e)}
    out.json("summary.json", summary)
    if args.figures:
        plt = _pyplot()
        fig, ax = plt.subplots()
        for i, s in enumerate(np.log(tr.scale_factors())):
            ax.plot(tr.tau, s, label=f"log a{i + 1}")
        ax.set_xlabel("tau")
        ax.legend()
        out.figure("scale_factors.png", fig)
    print(f"integrated {len(tr.tau)} samples; max MC residual {summary['max_mc_norm']:.3g}")
    return EXIT_OK


def _modes(cfg: list, grid, n: int):
    """Sum of amplitude * sin/cos(k . x) per component."""
    import numpy as np

    X = grid.coords()
    out = np.zeros((n,) + grid.points)
    for m in cfg or []:
        k = list(m.get("k", [1])) + [0] * grid.N
        phase = sum(kk * x for kk, x in zip(k[:grid.N], X))
        fn = {"sin": np.sin, "cos": np.cos}.get(m.get("kind", "sin"))
        comp = int(m.get("component", 0))
        if fn is None or not 0 <= comp < n:
            raise _config_error(f"bad mode {m}")
        out[comp] += float(m.get("amplitude", 1.0)) * fn(phase)
    return out


def _constants(cfg: dict):
    from . import hyperbolic as H

    try:
        return H.Constants(**{k: float(v) for k, v in cfg.items()})
    except TypeError as e:
        raise _config_error(f"bad constants: {e}")


def build_system(cfg: dict, grid_points: int, method: str):
    """(system or background, grid, u0, cutoff, kind) from an evolve configuration."""
    import numpy as np

    from . import hyperbolic as H

    kind = cfg.get("type", "square")
    N = int(cfg.get("N", 1))
    if N < 1 or N > 3:
        raise _config_error("N must be 1, 2 or 3")
    grid = H.Grid((grid_points,) * N, method)
    consts = _constants(cfg.get("constants", {}))
    if kind == "square":
        n = int(cfg["n"])
        a = np.array(cfg["a"], float)
        L = np.array(cfg["L"], float) if "L" in cfg else None
        A = np.array(cfg["A"], float) if "A" in cfg else None
        B = np.array(cfg["B"], float) if "B" in cfg else None
        src = cfg.get("source")
        F = None
        if src:
            profile = _modes(src.get("modes"), grid, n)
            rate = float(src.get("rate", consts.Z))
            F = (lambda tau, X, pr=profile, r=rate: np.exp(-r * tau) * pr)
        sys_ = H.SquareSystem(n, a, consts, L=L, F=F, A=A, B=B, N=N)
        u0 = _modes(cfg.get("data", {}).get("modes"), grid, n) if cfg.get("data") else None
        return sys_, grid, u0, cfg.get("cutoff"), kind
    if kind == "phi-kasner":
        p = [float(x) for x in cfg.get("p", [1, 2, 3])]
        amp = float(cfg.get("shear", 0.0))
        shear = (lambda x1: amp * np.cos(x1)) if amp else None
        bg = H.kasner_background(p, grid, shear=shear)
        u0 = _modes(cfg.get("data", {}).get("modes"), grid, 4) if cfg.get("data") else None
        return bg, grid, u0, None, kind
    raise _config_error(f"unknown system type {kind!r}")


def _state_bytes(u, tau: float) -> bytes:
    """One JSON header line, then row-major little-endian float64 data."""
    import numpy as np

    head = json.dumps({"dtype": "<f8", "order": "C", "shape": list(u.shape), "tau": float(tau)}, sort_keys=True)
    return head.encode() + b"\n" + np.ascontiguousarray(u, dtype="<f8").tobytes()


def read_state(path) -> tuple:
    """Inverse of the final-state writer: (array, tau)."""
    import numpy as np

    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    meta = json.loads(head)
    return np.frombuffer(body, dtype=meta["dtype"]).reshape(meta["shape"]), meta["tau"]


def cmd_evolve(args, out: Output) -> int:
    from itertools import product

    import numpy as np

    from . import hyperbolic as H

    cfg = _load_json(args.system, out)
    if args.grid < 4:
        raise _config_error("grid needs at least 4 points")
    if args.order < 0:
        raise _config_error("order must be non-negative")
    tau = _span(args.tau)
    try:
        obj, grid, u0, cut, kind = build_system(cfg, args.grid, args.method)
    except (KeyError, ValueError) as e:
        raise _config_error(f"bad system description: {e}")
    except H.HyperbolicError as e:
        raise _config_error(str(e))
    kw = dict(dt=args.dt, save_every=args.save_every, energy_order=args.order)
    alphas = [a for a in product(range(args.order + 1), repeat=grid.N) if sum(a) <= args.order]
    try:
        if kind == "square":
            sys_ = H.with_cutoff(obj, float(cut)) if cut is not None else obj
            hist = H.evolve_square(sys_, grid, tau, u0=u0, **kw)
            extra_names, extra = [], [[] for _ in hist.states]
        else:
            consts = _constants(cfg.get("constants", {}))
            r = H.evolve_mc_correction(obj, H.phi_gauge(), tau, consts, u0=u0 if u0 is not None else 0.0, **kw)
            hist = r.history
            extra_names = ["uprime_norm", "equation_norm"]
            extra = list(zip(r.uprime_norm, r.equation_norm))
    except H.PreconditionError as e:
        raise CliError(EXIT_PRECONDITION, str(e))
    except H.NumericalFailure as e:
        raise CliError(EXIT_NUMERICAL, str(e))
    except H.HyperbolicError as e:
        raise _config_error(str(e))
    header = ["tau", "sup_u"] + ["E_" + "".join(map(str, a)) for a in alphas] + extra_names
    rows = []
    for j, st in enumerate(hist.states):
        rows.append((st.tau, grid.sup(st.u), *(hist.energies[a][j] for a in alphas), *extra[j]))
    out.csv("history.csv", header, rows)
    out.binary("final_state.bin", _state_bytes(hist.final.u, hist.final.tau))
    out.json("run.json", {"type": kind, "grid": list(grid.points), "method": grid.method, "dt": hist.dt,
                          "steps": hist.steps, "cfl_max": hist.cfl_max, "a0_range": list(hist.a0_range)})
    if args.figures:
        plt = _pyplot()
        fig, ax = plt.subplots()
        ax.semilogy([r[0] for r in rows], [max(r[1], 1e-300) for r in rows])
        ax.set_xlabel("tau")
        ax.set_ylabel("sup |u|")
        out.figure("sup_norm.png", fig)
    print(f"{hist.steps} steps of size {hist.dt:.4g}; final sup |u| = {grid.sup(hist.final.u):.4g}")
    return EXIT_OK


def _gauge_json(g) -> dict:
    return {"sector": g.sector.name,
            "R": {str(i): [[str(x) for x in row] for row in g.R[i]] for i in range(5)},
            "S": {str(i): [[str(x) for x in row] for row in g.S[i]] for i in range(5)}}


def _gauge_from_json(d: dict):
    from . import hyperbolic as H

    sector = {"phi": H.phi_sector, "E": H.e_sector}.get(d.get("sector"))
    if sector is None:
        raise _config_error("gauge file needs sector 'phi' or 'E'")
    sec = sector()
    try:
        R = {i: [[_rational(x) for x in row] for row in d["R"][str(i)]] or [[] for _ in range(sec.n(i))]
             for i in range(5)}
        S = {i: [[_rational(x) for x in row] for row in d["S"][str(i)]] for i in range(5)}
    except (KeyError, TypeError) as e:
        raise _config_error(f"malformed gauge: {e}")
    return H.GaugeData(sec, R, S)


def cmd_gauge_verify(args, out: Output) -> int:
    from . import hyperbolic as H

    if args.search:
        sector = {"phi": H.phi_sector, "E": H.e_sector}[args.search]()
        res = H.search_gauge(sector, budget=args.budget, seed=args.seed)
        report = {"search": args.search, "seed": args.seed, "budget": args.budget, "found": res.found,
                  "message": res.message, "candidates_tried": res.tried,
                  "candidate_space_dims": {str(k): v for k, v in res.space_dims.items()}}
        if res.found:
            out.json("gauge.json", _gauge_json(res.gauge))
            rep = H.verify_gauge(res.gauge, seed=args.seed)
            report.update(checks=rep.checks, violations=rep.violations)
        out.json("report.json", report)
        print(f"search on the {args.search} sector: {res.message}")
        return EXIT_OK
    g = H.phi_gauge() if args.gauge == "phi" else _gauge_from_json(_load_json(args.gauge, out))
    rep = H.verify_gauge(g, seed=args.seed)
    out.json("report.json", {"checks": rep.checks, "violations": rep.violations, "ok": rep.ok,
                             "ranks": [g.m(i) for i in range(5)]})
    if args.gauge == "phi":
        out.json("gauge.json", _gauge_json(g))
    print("all gauge axioms hold" if rep.ok else "violations:\n  " + "\n  ".join(rep.violations))
    return EXIT_OK if rep.ok else EXIT_PRECONDITION


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise _config_error("--figures needs matplotlib (pip install artifact[figures])")
    return plt


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_CONFIG, message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcgla", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, default_out):
        sp.add_argument("--out", default=default_out, help="output directory")
        sp.add_argument("--figures", action="store_true", help="also write PNG figures (needs matplotlib)")
        return sp

    sp = common(sub.add_parser("bracket", help="exact bracket of two elements"), "out/bracket")
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", required=True)

    sp = common(sub.add_parser("mc-check", help="exact Maurer-Cartan residual [x, x]"), "out/mc-check")
    sp.add_argument("--element", required=True)

    sp = common(sub.add_parser("grade", help="filtration grades of an element"), "out/grade")
    sp.add_argument("--element", required=True)
    sp.add_argument("--alpha", help="test membership in F_alpha, e.g. 1,0,2")

    sp = common(sub.add_parser("formal-solve", help="formal MC series from a data tuple"), "out/formal-solve")
    sp.add_argument("--tuple", required=True)
    sp.add_argument("--order", type=int, default=4)

    sp = common(sub.add_parser("constraints", help="constraint graph and quadric diagnostics"), "out/constraints")
    sp.add_argument("--p", default="1,2,3")
    sp.add_argument("--kmax", type=int, default=4)
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--seed", type=int, default=0)

    sp = common(sub.add_parser("ode", help="homogeneous reduction as an ODE system"), "out/ode")
    sp.add_argument("--c", default="0,0,0", help="structure constants of the class A frame")
    sp.add_argument("--init", required=True)
    sp.add_argument("--tau", default="0:40")
    sp.add_argument("--samples", type=int, default=401)

    sp = common(sub.add_parser("evolve", help="symmetric hyperbolic evolution on a periodic grid"), "out/evolve")
    sp.add_argument("--system", required=True)
    sp.add_argument("--grid", type=int, default=64)
    sp.add_argument("--tau", default="0:1")
    sp.add_argument("--order", type=int, default=1, help="energies E_alpha for |alpha| <= order")
    sp.add_argument("--method", choices=["spectral", "fd4"], default="spectral")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--save-every", type=int, default=1)

    sp = common(sub.add_parser("gauge-verify", help="check or search a symmetric hyperbolic gauge"),
                "out/gauge-verify")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--gauge", default="phi", help="'phi' or a gauge JSON file")
    g.add_argument("--search", choices=["phi", "E"])
    sp.add_argument("--budget", type=int, default=64)
    sp.add_argument("--seed", type=int, default=0)
    return p


COMMANDS = {"bracket": cmd_bracket, "mc-check": cmd_mc_check, "grade": cmd_grade,
            "formal-solve": cmd_formal_solve, "constraints": cmd_constraints, "ode": cmd_ode,
            "evolve": cmd_evolve, "gauge-verify": cmd_gauge_verify}


def _threads() -> None:
    n = os.environ.get("MCGLA_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def main(argv: list | None = None) -> int:
    _threads()
    try:
        args = build_parser().parse_args(argv)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    config = {k: v for k, v in sorted(vars(args).items())}
    try:
        out = Output(args.out)
    except OSError as e:
        print(f"error: cannot create {args.out}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = COMMANDS[args.command](args, out)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        status = e.code
    out.manifest(args.command, config, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
