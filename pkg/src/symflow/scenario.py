"""Scenario files: parsing, running a flow and building the drift report.

A scenario is an INI-style text file with three sections::

    [scenario]
    kind = neumann
    n = 3
    eps = 1
    t_end = 10
    dt = 1e-3
    seed = 7
    A = diag 1 2 3 4

    [initial]          # optional; random data from ``seed`` when absent
    x = 1 0 0 0
    y = 0 0.5 0 0

    [thresholds]
    default = 1e-9
    H = 1e-10

Vectors are whitespace separated; matrices are rows separated by ``;``.  The
drift matrix ``A`` is one of ``diag a0 a1 ...``, ``block alpha d2 ... dn``
(the eps = -1 block-canonical form), ``matrix r0; r1; ...`` or ``E1``.

Invariant thresholds bound the relative drift max|f - f(0)| / max(1, |f(0)|).
Checks (scalar diagnostics such as a conjugacy error) are compared directly
with their threshold; each check has a built-in default that a
``[thresholds]`` entry overrides.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import elastica, jacobi, kepler, neumann
from .affine_flow import AffineSystem, affine_hamiltonian, casimir, extremal_field, space_form_generator
from .cartan import CartanElement, CartanSplit, EpsForm, decompose
from .integrator import Trajectory, drift_report, integrate, sphere_projection
from .spectral import DEFAULT_LAMBDAS, char_coeffs, spectral_matrix

__all__ = [
    "KINDS",
    "ScenarioError",
    "Scenario",
    "RunResult",
    "parse_scenario",
    "load_scenario",
    "run_scenario",
    "list_invariants",
    "format_csv",
]

KINDS = (
    "affine",
    "neumann",
    "jacobi-geodesic",
    "knorrer-conjugacy",
    "kepler-transport",
    "elastic",
    "pendulum",
)

_SCENARIO_KEYS = {
    "kind", "n", "eps", "s", "t_end", "dt", "seed", "h", "radius", "A", "lambdas", "project", "scale",
}
_INITIAL_KEYS = {
    "affine": {"Lp", "Lk"},
    "neumann": {"x", "y"},
    "jacobi-geodesic": {"x", "p"},
    "knorrer-conjugacy": {"x", "p"},
    "kepler-transport": {"x", "y"},
    "elastic": {"p", "l"},
    "pendulum": {"R", "Q"},
}
_CHECK_DEFAULTS = {
    "knorrer-conjugacy": {"conjugacy": 1e-5},
    "kepler-transport": {"energy_level": 1e-10, "ode_residual": 1e-6, "focal_residual": 1e-6},
    "elastic": {"kappa_cubic": 1e-6, "kappa_identity": 1e-12},
    "pendulum": {"orthogonality": 1e-9, "embedding": 1e-14},
}


class ScenarioError(ValueError):
    """Malformed scenario; carries the offending line and field when known."""

    def __init__(self, message: str, source: str = "<scenario>", line: int | None = None, field: str | None = None):
        where = source if line is None else f"{source}:{line}"
        what = "" if field is None else f" [{field}]"
        super().__init__(f"{where}:{what} {message}")
        self.line = line
        self.field = field


@dataclass(frozen=True)
class Scenario:
    kind: str
    n: int
    eps: int
    t_end: float
    dt: float
    s: int = 0
    seed: int = 0
    h: float = 1.0
    radius: float = 1.0
    A_spec: str | None = None
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    project: bool = False
    scale: float = 0.5
    initial: dict[str, np.ndarray] = field(default_factory=dict)
    thresholds: dict[str, float] = field(default_factory=dict)
    default_threshold: float | None = None
    source: str = "<scenario>"

    @property
    def form(self) -> EpsForm:
        return EpsForm(self.n, self.eps)

    def with_overrides(self, dt: float | None = None, t_end: float | None = None, seed: int | None = None) -> Scenario:
        kw = dict(self.__dict__)
        if dt is not None:
            kw["dt"] = float(dt)
        if t_end is not None:
            kw["t_end"] = float(t_end)
        if seed is not None:
            kw["seed"] = int(seed)
        return Scenario(**kw)


@dataclass
class RunResult:
    header: list[str]
    rows: np.ndarray
    report: dict
    passed: bool


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return i
    return None


class _Reader:
    """Typed access to config values, raising ScenarioError with locations."""

    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), strict=True)
        cp.optionxform = str  # keep matrix names like Lp
        try:
            cp.read_string(text, source=source)
        except configparser.ParsingError as exc:
            lineno = exc.errors[0][0] if getattr(exc, "errors", None) else None
            raise ScenarioError("cannot parse line", source, lineno) from exc
        except configparser.Error as exc:
            raise ScenarioError(str(exc).splitlines()[0], source, getattr(exc, "lineno", None)) from exc
        self.cp = cp

    def error(self, section: str, key: str | None, message: str) -> ScenarioError:
        return ScenarioError(message, self.source, _line_of(self.text, section, key), key)

    def has(self, section: str, key: str) -> bool:
        return self.cp.has_option(section, key)

    def raw(self, section: str, key: str) -> str:
        return self.cp.get(section, key).strip()

    def number(self, section: str, key: str, default=None, kind=float):
        if not self.has(section, key):
            if default is None:
                raise self.error(section, None, f"missing required field {key!r}")
            return default
        text = self.raw(section, key)
        try:
            val = float(text)
        except ValueError:
            raise self.error(section, key, f"expected a number, got {text!r}") from None
        if not math.isfinite(val):
            raise self.error(section, key, "value must be finite")
        if kind is int:
            if not val.is_integer():
                raise self.error(section, key, f"expected an integer, got {text!r}")
            return int(val)
        return val

    def vector(self, section: str, key: str) -> np.ndarray:
        text = self.raw(section, key)
        try:
            v = np.array([float(t) for t in text.replace(",", " ").split()])
        except ValueError:
            raise self.error(section, key, f"expected numbers, got {text!r}") from None
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise self.error(section, key, "vector must be nonempty and finite")
        return v

    def matrix(self, section: str, key: str, text: str | None = None) -> np.ndarray:
        text = self.raw(section, key) if text is None else text
        rows = [r for r in text.split(";") if r.strip()]
        try:
            M = [[float(t) for t in r.replace(",", " ").split()] for r in rows]
        except ValueError:
            raise self.error(section, key, f"expected numbers, got {text!r}") from None
        if not M or len({len(r) for r in M}) != 1:
            raise self.error(section, key, "matrix rows must have equal length")
        M = np.array(M)
        if not np.all(np.isfinite(M)):
            raise self.error(section, key, "matrix entries must be finite")
        return M


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse scenario text; raises ScenarioError on any malformed or unknown field."""
    rd = _Reader(text, source)
    if not rd.cp.has_section("scenario"):
        raise ScenarioError("missing [scenario] section", source)
    for sec in rd.cp.sections():
        if sec not in ("scenario", "initial", "thresholds"):
            raise rd.error(sec, None, f"unknown section [{sec}]")
    for key in rd.cp.options("scenario"):
        if key not in _SCENARIO_KEYS:
            raise rd.error("scenario", key, f"unknown field {key!r}")

    if not rd.has("scenario", "kind"):
        raise rd.error("scenario", None, "missing required field 'kind'")
    kind = rd.raw("scenario", "kind")
    if kind not in KINDS:
        raise rd.error("scenario", "kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")

    n = rd.number("scenario", "n", kind=int)
    if n < 1 or n > 12:
        raise rd.error("scenario", "n", "n must be between 1 and 12")
    eps = rd.number("scenario", "eps", 1, int)
    if eps not in (1, -1):
        raise rd.error("scenario", "eps", "eps must be 1 or -1")
    s = rd.number("scenario", "s", 0, int)
    if s not in (0, 1):
        raise rd.error("scenario", "s", "s must be 0 or 1")
    t_end = rd.number("scenario", "t_end")
    dt = rd.number("scenario", "dt")
    for key, val in (("t_end", t_end), ("dt", dt)):
        if not val > 0:
            raise rd.error("scenario", key, f"{key} must be positive")
    seed = rd.number("scenario", "seed", 0, int)
    h = rd.number("scenario", "h", 1.0)
    radius = rd.number("scenario", "radius", 1.0)
    scale = rd.number("scenario", "scale", 0.5)
    for key, val in (("h", h), ("radius", radius), ("scale", scale)):
        if not val > 0:
            raise rd.error("scenario", key, f"{key} must be positive")
    lambdas = DEFAULT_LAMBDAS
    if rd.has("scenario", "lambdas"):
        lambdas = tuple(float(x) for x in rd.vector("scenario", "lambdas"))
        if any(x == 0 for x in lambdas):
            raise rd.error("scenario", "lambdas", "lambda samples must be nonzero")
    project = False
    if rd.has("scenario", "project"):
        try:
            project = rd.cp.getboolean("scenario", "project")
        except ValueError:
            raise rd.error("scenario", "project", "expected true or false") from None
    A_spec = rd.raw("scenario", "A") if rd.has("scenario", "A") else None

    initial = {}
    if rd.cp.has_section("initial"):
        allowed = _INITIAL_KEYS[kind]
        for key in rd.cp.options("initial"):
            if key not in allowed:
                raise rd.error("initial", key, f"unknown field {key!r} for kind {kind!r}")
            text = rd.raw("initial", key)
            initial[key] = rd.matrix("initial", key) if ";" in text else rd.vector("initial", key)
        if set(initial) != allowed:
            missing = sorted(allowed - set(initial))
            raise rd.error("initial", None, f"missing initial field(s) {', '.join(missing)}")

    thresholds = {}
    default = None
    if rd.cp.has_section("thresholds"):
        for key in rd.cp.options("thresholds"):
            val = rd.number("thresholds", key)
            if not val > 0:
                raise rd.error("thresholds", key, "threshold must be positive")
            if key == "default":
                default = val
            else:
                thresholds[key] = val

    sc = Scenario(
        kind=kind, n=n, eps=eps, t_end=t_end, dt=dt, s=s, seed=seed, h=h, radius=radius, A_spec=A_spec,
        lambdas=lambdas, project=project, scale=scale, initial=initial, thresholds=thresholds,
        default_threshold=default, source=source,
    )
    try:
        _build(sc)
    except ScenarioError:
        raise
    except ValueError as exc:
        section = "initial" if sc.initial else "scenario"
        raise ScenarioError(str(exc), source, _line_of(text, section, None), section) from exc
    known = set(list_invariants(kind, n, eps, sc)) | set(_CHECK_DEFAULTS.get(kind, {}))
    for key in thresholds:
        if key not in known:
            raise rd.error("thresholds", key, f"no invariant or check named {key!r} for kind {kind!r}")
    return sc


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), str(path))


def parse_A(spec: str, form: EpsForm) -> np.ndarray:
    parts = spec.split(None, 1)
    head = parts[0] if parts else ""
    rest = parts[1] if len(parts) > 1 else ""
    d = form.dim
    try:
        if head == "E1":
            return space_form_generator(form)
        if head == "diag":
            v = np.array([float(t) for t in rest.split()])
            if v.size != d:
                raise ValueError(f"diag needs {d} entries")
            return np.diag(v)
        if head == "block":
            v = np.array([float(t) for t in rest.split()])
            if v.size != d - 1:
                raise ValueError(f"block needs alpha and {d - 2} diagonal entries")
            return neumann.block_canonical_matrix(v[0], v[1:])
        if head == "matrix":
            M = np.array([[float(t) for t in r.split()] for r in rest.split(";") if r.strip()])
            if M.shape != (d, d):
                raise ValueError(f"matrix must be {d}x{d}")
            return M
    except ValueError as exc:
        raise ValueError(f"bad A specification: {exc}") from None
    raise ValueError(f"bad A specification {spec!r}; use diag, block, matrix or E1")


def _is_diag(A: np.ndarray) -> bool:
    return bool(np.all(A == np.diag(np.diag(A))))


def _block_params(A: np.ndarray) -> tuple[float, np.ndarray] | None:
    B = neumann.block_canonical_matrix(A[1, 0], np.diag(A)[2:])
    return (float(A[1, 0]), np.diag(A)[2:].copy()) if np.array_equal(A, B) and A[1, 0] != 0 else None


# ---------------------------------------------------------------- kind setups


@dataclass
class _Setup:
    """Everything needed to run one scenario."""

    field: Callable[[np.ndarray], np.ndarray]
    state0: np.ndarray
    names: list[str]
    invariants: dict[str, Callable[[np.ndarray], float]]
    project: Callable[[np.ndarray], np.ndarray] | None = None
    columns: Callable[[np.ndarray], np.ndarray] | None = None  # flat state -> CSV values
    post: Callable | None = None  # (Scenario, Trajectory) -> (rows, header extras, checks, extras)


def _vec_names(prefix: str, size: int, start: int = 0) -> list[str]:
    return [f"{prefix}{i}" for i in range(start, start + size)]


def _mat_names(prefix: str, d: int) -> list[str]:
    return [f"{prefix}[{i},{j}]" for i in range(d) for j in range(d)]


def _require_A(sc: Scenario) -> np.ndarray:
    if sc.A_spec is None:
        raise ScenarioError(f"kind {sc.kind!r} needs an A specification", sc.source, None, "A")
    return parse_A(sc.A_spec, sc.form)


def _setup_affine(sc: Scenario) -> _Setup:
    form = sc.form
    A = _require_A(sc)
    split = CartanSplit.SPACE_FORM if sc.A_spec.split()[0] == "E1" else CartanSplit.SYMMETRIC
    sys = AffineSystem(A, sc.s, form, split)
    d = form.dim
    m = d * d
    if sc.initial:
        Lp, Lk = sc.initial["Lp"], sc.initial["Lk"]
        if Lp.shape != (d, d) or Lk.shape != (d, d):
            raise ValueError(f"Lp and Lk must be {d}x{d}")
        L = CartanElement(Lp, Lk)
        part = decompose(L.matrix(), form, split)
        if np.max(np.abs(part.Lp - Lp)) > 1e-12 or np.max(np.abs(part.Lk - Lk)) > 1e-12:
            raise ValueError("Lp must lie in p and Lk in k")
    else:
        rng = np.random.default_rng(sc.seed)
        L = decompose(sc.scale * rng.normal(size=(d, d)), form, split)

    def H(v):
        return affine_hamiltonian(CartanElement(v[:m].reshape(d, d), v[m:].reshape(d, d)), sys)

    def C(v):
        return casimir(CartanElement(v[:m].reshape(d, d), v[m:].reshape(d, d)), sys)

    inv = {"H": H, "casimir": C}
    for lam in sc.lambdas:
        for i in range(1, d + 1):
            def coeff(v, lam=lam, i=i):
                Lv = CartanElement(v[:m].reshape(d, d), v[m:].reshape(d, d))
                return float(char_coeffs(spectral_matrix(Lv, sys, lam))[i])

            inv[f"cp[{lam:g}]_c{i}"] = coeff
    return _Setup(extremal_field(sys), L.to_vector(), _mat_names("Lp", d) + _mat_names("Lk", d), inv)


def _rank_one_invariants(form: EpsForm, A: np.ndarray, radius: float) -> dict:
    d = form.dim
    sig = form.signature

    def H(v):
        return neumann.constrained_hamiltonian(neumann.RankOneState(v[:d], v[d:], form, radius), A)

    inv = {"H": H, "norm_x": lambda v: float(np.dot(sig * v[:d], v[:d])), "xy": lambda v: float(np.dot(sig * v[:d], v[d:]))}
    if form.eps == 1 and _is_diag(A):
        alphas = np.diag(A)
        for k in range(d):
            inv[f"F{k + 1}"] = lambda v, k=k: float(neumann.residues_euclidean_xy(v[:d], v[d:], alphas)[k])
        inv["sum_F"] = lambda v: float(np.sum(neumann.residues_euclidean_xy(v[:d], v[d:], alphas)))
    elif form.eps == -1 and d >= 3 and _block_params(A) is not None:
        alpha, dd = _block_params(A)

        def real_inv(v, k):
            st = neumann.RankOneState(v[:d], v[d:], form, radius)
            return float(neumann.residues_hyperbolic(st, alpha, dd).real_invariants()[k])

        names = ["ReF1", "ImF1"] + [f"F{k}" for k in range(3, d + 1)]
        for k, name in enumerate(names):
            inv[name] = lambda v, k=k: real_inv(v, k)
    return inv


def _setup_neumann(sc: Scenario) -> _Setup:
    form = sc.form
    A = _require_A(sc)
    d = form.dim
    if sc.initial:
        st = neumann.RankOneState(sc.initial["x"], sc.initial["y"], form, sc.radius)
        st.validate()
    else:
        st = neumann.random_state(form, np.random.default_rng(sc.seed), sc.radius, sc.scale)
    proj = sphere_projection(form, sc.radius) if sc.project else None
    return _Setup(
        neumann.neumann_field(A, form), st.to_vector(), _vec_names("x", d) + _vec_names("y", d),
        _rank_one_invariants(form, A, sc.radius), proj,
    )


def _quadric_initial(sc: Scenario, A: np.ndarray) -> jacobi.QuadricState:
    form = sc.form
    if sc.initial:
        st = jacobi.QuadricState(sc.initial["x"], sc.initial["p"], form)
        st.validate(A)
        return st
    return jacobi.random_quadric_state(A, form, np.random.default_rng(sc.seed), sc.scale)


def _geodesic_invariants(form: EpsForm, A: np.ndarray) -> dict:
    d = form.dim
    sig = form.signature
    Ainv = np.linalg.inv(A)

    def H(v):
        return 0.5 * float(np.dot(sig * v[d:], v[d:]))

    inv = {
        "H": H,
        "joachimsthal": lambda v: jacobi.joachimsthal(jacobi.QuadricState(v[:d], v[d:], form), A),
        "quadric": lambda v: float(np.dot(sig * v[:d], Ainv @ v[:d])),
    }
    if form.eps == 1 and _is_diag(A):
        alphas = np.diag(A)
        for k in range(d):
            inv[f"G{k + 1}"] = lambda v, k=k: float(
                jacobi.residues_geodesic(jacobi.QuadricState(v[:d], v[d:], form), alphas)[k]
            )
    return inv


def _setup_geodesic(sc: Scenario) -> _Setup:
    form = sc.form
    A = _require_A(sc)
    st = _quadric_initial(sc, A)
    d = form.dim
    return _Setup(
        jacobi.geodesic_field(A, form), st.to_vector(), _vec_names("x", d) + _vec_names("p", d),
        _geodesic_invariants(form, A),
    )


def _setup_knorrer(sc: Scenario) -> _Setup:
    """Joint integration of the geodesic flow and the lambda-extended Neumann flow."""
    form = sc.form
    A = _require_A(sc)
    d = form.dim
    geo0 = _quadric_initial(sc, A)
    lam0, u0, v0 = jacobi.knorrer_inverse(geo0, A)
    gfield = jacobi.geodesic_field(A, form)
    kfield = jacobi.knorrer_field(A, form)

    def f(w):
        return np.concatenate([gfield(w[: 2 * d]), kfield(w[2 * d :])])

    ginv = _geodesic_invariants(form, A)
    inv = {name: (lambda w, g=g: g(w[: 2 * d])) for name, g in ginv.items()}
    inv["F0"] = lambda w: jacobi.knorrer_F0(w[2 * d : 3 * d], w[3 * d : 4 * d], A, form)

    def post(sc_, traj):
        err = 0.0
        for w in traj.states:
            img = jacobi.knorrer_forward(w[4 * d], w[2 * d : 3 * d], w[3 * d : 4 * d], A, form)
            err = max(err, float(np.max(np.abs(img.to_vector() - w[: 2 * d]))))
        return {"conjugacy": err}, {}

    names = _vec_names("x", d) + _vec_names("p", d) + _vec_names("u", d) + _vec_names("v", d) + ["lam"]
    kproj = jacobi.knorrer_projection(form)

    def project(w):
        return np.concatenate([w[: 2 * d], kproj(w[2 * d :])])

    return _Setup(f, np.concatenate([geo0.to_vector(), u0, v0, [lam0]]), names, inv, project=project, post=post)


def _setup_kepler(sc: Scenario) -> _Setup:
    form = sc.form
    params = kepler.StereoParams(sc.h, sc.eps, sc.n)
    d = form.dim
    if sc.initial:
        x, y = sc.initial["x"], sc.initial["y"]
        if x.shape != (d,) or y.shape != (d,):
            raise ValueError(f"x and y must have length {d}")
    else:
        rng = np.random.default_rng(sc.seed)
        xbar = sc.scale * rng.normal(size=d - 1)
        x0 = -abs(rng.normal()) if sc.eps == 1 else 1.0
        x = np.concatenate([[x0], xbar])
        y = rng.normal(size=d)
    st = kepler.free_state(x, y, params)
    return _Setup(kepler.free_field(form), st.to_vector(), _vec_names("x", d) + _vec_names("y", d), {}, post=None)


def _setup_elastic(sc: Scenario) -> _Setup:
    form = sc.form
    if sc.n < 2:
        raise ValueError("elastic needs n >= 2")
    if sc.A_spec is not None and sc.A_spec.strip() != "E1":
        raise ValueError("elastic scenarios use A = E1")
    d = form.dim
    m = d * d
    if sc.initial:
        st = elastica.ElasticState.from_vectors(sc.initial["p"], sc.initial["l"], form)
    else:
        rng = np.random.default_rng(sc.seed)
        st = elastica.ElasticState.from_vectors(sc.scale * rng.normal(size=sc.n), sc.scale * rng.normal(size=sc.n - 1), form)
    st.validate()
    s = sc.s

    def es(v):
        return elastica.ElasticState.from_vector(v, form)

    inv = {name: (lambda v, name=name: elastica.elastic_invariants(es(v), s)[name]) for name in ("H", "I1", "I2")}

    def columns(v):
        # p = first column of Lp below the corner, l = entries 2..n of column 1 of Lperp
        return np.concatenate([v[:m].reshape(d, d)[1:, 0], v[m:].reshape(d, d)[2:, 1]])

    def post(sc_, traj):
        inv0 = elastica.elastic_invariants(es(traj.states[0]), s)
        A = space_form_generator(form)
        cubic = ident = 0.0
        for v in traj.states:
            e = es(v)
            xi = elastica.curvature_sq(e.Lperp, A, form)
            r = elastica.kappa_cubic_residual(
                xi, elastica.kappa_sq_rate(e), inv0["H"], form.eps * s, inv0["I1"], inv0["I2"], form.eps
            )
            cubic = max(cubic, abs(r))
            ident = max(ident, abs(xi - float(np.sum(e.Lperp * e.Lperp)) / 2.0))
        energy, _ = elastica.elastic_energy(traj, form)
        return {"kappa_cubic": cubic, "kappa_identity": ident}, {"elastic_energy": energy}

    names = _vec_names("p", sc.n, 1) + _vec_names("l", sc.n - 1, 2)
    return _Setup(elastica.elastic_field(form, s), st.to_vector(), names, inv, columns=columns, post=post)


def _setup_pendulum(sc: Scenario) -> _Setup:
    n = sc.n
    if n < 2:
        raise ValueError("pendulum needs n >= 2")
    m = n * n
    if sc.initial:
        R, Q = np.atleast_2d(sc.initial["R"]), np.atleast_2d(sc.initial["Q"])
        if R.shape != (n, n) or Q.shape != (n, n):
            raise ValueError(f"R and Q must be {n}x{n}")
        if np.max(np.abs(R.T @ R - np.eye(n))) > 1e-10:
            raise ValueError("R must be orthogonal")
        if np.max(np.abs(Q + Q.T)) > 1e-12:
            raise ValueError("Q must be antisymmetric")
    else:
        rng = np.random.default_rng(sc.seed)
        R, _ = np.linalg.qr(rng.normal(size=(n, n)))
        Q = sc.scale * rng.normal(size=(n, n))
        Q = Q - Q.T
    inv = {"energy": lambda v: elastica.pendulum_energy(v[:m].reshape(n, n), v[m:].reshape(n, n))}
    for i in range(1, n):
        for j in range(i + 1, n):
            inv[f"Q0[{i},{j}]"] = lambda v, i=i, j=j: float(v[m:].reshape(n, n)[i, j])

    def post(sc_, traj):
        orth = emb = 0.0
        has_k0 = n > 2 and np.max(np.abs(elastica.pendulum_k0(Q))) > 0
        for v in traj.states:
            Rv, Qv = v[:m].reshape(n, n), v[m:].reshape(n, n)
            orth = max(orth, float(np.max(np.abs(Rv.T @ Rv - np.eye(n)))))
            if not has_k0:
                Qv = Qv - elastica.pendulum_k0(Qv)
                P, Qt = elastica.embed_pendulum(Rv, Qv)
                dP, dQt = elastica.pendulum_embedding(P, Qt)
                d = elastica.elastic_rhs(elastica.elastic_from_pendulum(P, Qt), 0)
                emb = max(emb, float(np.max(np.abs(d.Lp + dP))), float(np.max(np.abs(d.Lk + dQt))))
        checks = {"orthogonality": orth}
        if not has_k0:
            checks["embedding"] = emb
        return checks, {}

    return _Setup(
        elastica.pendulum_field(n), np.concatenate([R.ravel(), Q.ravel()]),
        _mat_names("R", n) + _mat_names("Q", n), inv, post=post,
    )


_SETUPS = {
    "affine": _setup_affine,
    "neumann": _setup_neumann,
    "jacobi-geodesic": _setup_geodesic,
    "knorrer-conjugacy": _setup_knorrer,
    "kepler-transport": _setup_kepler,
    "elastic": _setup_elastic,
    "pendulum": _setup_pendulum,
}

_KEPLER_INVARIANTS = ("E", "L_norm", "F_norm", "eccentricity_identity")


def _build(sc: Scenario) -> _Setup:
    return _SETUPS[sc.kind](sc)


def list_invariants(kind: str, n: int = 3, eps: int = 1, scenario: Scenario | None = None) -> list[str]:
    """Names of the invariants recorded for a scenario kind.

    Without a scenario a representative one is used (diagonal or
    block-canonical A, default lambda samples); residue names depend on A.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    if kind == "kepler-transport":
        return list(_KEPLER_INVARIANTS)
    if scenario is None:
        d = n + 1
        if kind in ("affine", "elastic"):
            A_spec = "E1" if kind == "elastic" else "diag " + " ".join(str(k + 1) for k in range(d))
        elif eps == -1 and d >= 3:
            A_spec = "block 1 " + " ".join(str(k + 2) for k in range(d - 2))
        else:
            A_spec = "diag " + " ".join(str(k + 1) for k in range(d))
        scenario = Scenario(kind=kind, n=n, eps=eps, t_end=1.0, dt=0.1, A_spec=A_spec, scale=0.1)
    return list(_build(scenario).invariants)


# ---------------------------------------------------------------- running


def _drift_entries(traj: Trajectory, sc: Scenario) -> dict:
    out = {}
    for name, d in drift_report(traj).entries.items():
        thr = sc.thresholds.get(name, sc.default_threshold)
        out[name] = {
            "initial": d.initial,
            "max_abs_drift": d.max_abs_drift,
            "max_rel_drift": d.max_rel_drift,
            "threshold": thr,
            "pass": True if thr is None else bool(d.max_rel_drift < thr),
        }
    return out


def _check_entries(checks: dict[str, float], sc: Scenario) -> dict:
    defaults = _CHECK_DEFAULTS.get(sc.kind, {})
    out = {}
    for name, value in checks.items():
        thr = sc.thresholds.get(name, defaults.get(name))
        ok = bool(math.isfinite(value)) and (thr is None or value < thr)
        out[name] = {"value": value, "threshold": thr, "pass": ok}
    return out


def _run_kepler(sc: Scenario, setup: _Setup) -> RunResult:
    params = kepler.StereoParams(sc.h, sc.eps, sc.n)
    free = integrate(setup.field, setup.state0, sc.t_end, sc.dt)
    arcs = kepler.transport_to_kepler(free, params)
    if not arcs:
        raise ValueError("the free trajectory never leaves the projection pole")
    n = sc.n
    header = ["t", "arc"] + _vec_names("q", n, 1) + _vec_names("p", n, 1) + list(_KEPLER_INVARIANTS)
    rows = []
    merged: dict[str, dict] = {}
    target = -sc.eps * sc.h**2 / 2.0
    level = ode = focal = 0.0
    conics = []
    for k, arc in enumerate(arcs):
        inv = np.column_stack([arc.invariants[name] for name in _KEPLER_INVARIANTS])
        rows.append(np.column_stack([arc.times, np.full(len(arc), k), arc.states, inv]))
        for name, entry in _drift_entries(arc, sc).items():
            if name not in merged:
                merged[name] = entry
            else:
                cur = merged[name]
                for key in ("max_abs_drift", "max_rel_drift"):
                    cur[key] = max(cur[key], entry[key])
                cur["pass"] = cur["pass"] and entry["pass"]
        level = max(level, float(np.max(np.abs(arc.invariants["E"] - target))))
        if len(arc) >= 5:
            ode = max(ode, *kepler.kepler_ode_residual(arc))
        rec = kepler.conic_classify(arc)
        if not rec.degenerate:
            focal = max(focal, rec.max_residual)
        conics.append({"kind": rec.kind, "eccentricity": rec.eccentricity, "L_norm": rec.L_norm, "energy": rec.energy})
    checks = _check_entries({"energy_level": level, "ode_residual": ode, "focal_residual": focal}, sc)
    kinds = {c["kind"] for c in conics}
    extras = {"target_energy": target, "arcs": len(arcs), "conic": conics[0]["kind"] if len(kinds) == 1 else sorted(kinds),
              "conics": conics}
    return _finish(sc, header, np.vstack(rows), merged, checks, extras)


def _finish(sc: Scenario, header, rows, invariants, checks, extras) -> RunResult:
    passed = all(e["pass"] for e in invariants.values()) and all(c["pass"] for c in checks.values())
    report = {
        "kind": sc.kind,
        "n": sc.n,
        "eps": sc.eps,
        "s": sc.s,
        "seed": sc.seed,
        "t_end": sc.t_end,
        "dt": sc.dt,
        "invariants": invariants,
        "checks": checks,
        "extras": extras,
        "pass": passed,
    }
    return RunResult(header, rows, report, passed)


def run_scenario(sc: Scenario) -> RunResult:
    """Integrate the scenario and assemble CSV rows and the drift report.

    Raises ``IntegrationError`` when the flow fails and ``ScenarioError`` for
    data rejected during setup.
    """
    try:
        setup = _build(sc)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc), sc.source) from exc
    if sc.kind == "kepler-transport":
        return _run_kepler(sc, setup)
    traj = integrate(setup.field, setup.state0, sc.t_end, sc.dt, project=setup.project, invariants=setup.invariants)
    cols = traj.states if setup.columns is None else np.array([setup.columns(v) for v in traj.states])
    inv_names = list(setup.invariants)
    inv = np.column_stack([traj.invariants[name] for name in inv_names]) if inv_names else np.empty((len(traj), 0))
    rows = np.column_stack([traj.times, cols, inv])
    header = ["t"] + setup.names + inv_names
    checks, extras = ({}, {}) if setup.post is None else setup.post(sc, traj)
    return _finish(sc, header, rows, _drift_entries(traj, sc), _check_entries(checks, sc), extras)


def format_csv(header: list[str], rows: np.ndarray) -> str:
    """CSV text with every float printed to 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"
