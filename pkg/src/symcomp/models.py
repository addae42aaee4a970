"""The traffic (cell transmission) and DC microgrid case-study models."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .abstraction import DiscreteTimeModel, DomainError, SampledContinuousModel, affine_model

# ------------------------------------------------------------------ traffic
CONVENTIONS = ("default", "literal")


@dataclass(frozen=True)
class TrafficParams:
    l: float = 0.25            # km
    v: float = 70.0            # km/h
    T: float = 10.0 / 3600.0   # h
    q: float = 0.25
    domain: tuple = (0.0, 30.0)
    safe: tuple = ((2.0, 25.0), (5.0, 25.0), (5.0, 25.0), (5.0, 25.0))
    inputs: tuple = (0.0, 1.0)

    def __post_init__(self):
        if min(self.l, self.v, self.T) <= 0 or not (0 <= self.q <= 1):
            raise ValueError("traffic parameters must be positive with q in [0, 1]")

    @property
    def a(self) -> float:
        """Tv/l."""
        return self.T * self.v / self.l

    @property
    def b(self) -> float:
        """Tv/(1.6 l)."""
        return self.T * self.v / (1.6 * self.l)

    def self_coefficient(self, convention: str = "default", last: bool = False) -> float:
        if convention not in CONVENTIONS:
            raise ValueError(f"unknown sign convention {convention!r}")
        if last and convention == "literal":
            return 1 + self.a - self.q
        return 1 - self.a - self.q


def traffic_step(x, u, sign_convention: str = "default", params: TrafficParams = TrafficParams()) -> np.ndarray:
    """One step of the four-section model; x may be (4,) or (B, 4), u (3,) or (B, 3)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    a, b = params.a, params.b
    s = params.self_coefficient(sign_convention)
    s4 = params.self_coefficient(sign_convention, last=True)
    x1, x2, x3, x4 = (x[..., k] for k in range(4))
    out = np.stack([
        (1 - b) * x1 + 5 * u[..., 0],
        a * x1 + s * x2 + a * x4,
        a * x2 + s * x3 + 8 * u[..., 1],
        a * x3 + s4 * x4 + 8 * u[..., 2],
    ], axis=-1)
    return out


@dataclass
class TrafficNetwork:
    models: list
    edges: list
    safe: list
    params: TrafficParams
    convention: str

    def neighbors(self, i):
        return sorted(j for j, k in self.edges if k == i)

    def deflated(self, eps) -> list[tuple[float, float]]:
        """Abstract safe intervals [lo + eps_i, hi - eps_i]."""
        eps = np.broadcast_to(np.asarray(eps, dtype=float), (len(self.safe),))
        return [(lo + e, hi - e) for (lo, hi), e in zip(self.safe, eps)]


def traffic_network(params: TrafficParams = TrafficParams(), sign_convention: str = "default") -> TrafficNetwork:
    """Four scalar components; S2 reads x1 and x4, S3 reads x2, S4 reads x3."""
    a, b = params.a, params.b
    s = params.self_coefficient(sign_convention)
    s4 = params.self_coefficient(sign_convention, last=True)
    U = np.asarray(params.inputs, dtype=float).reshape(-1, 1)
    models = [
        affine_model([[1 - b]], B=[[5.0]], ext_inputs=U, name="S1"),
        affine_model([[s]], E=[[a, a]], name="S2"),
        affine_model([[s]], B=[[8.0]], E=[[a]], ext_inputs=U, name="S3"),
        affine_model([[s4]], B=[[8.0]], E=[[a]], ext_inputs=U, name="S4"),
    ]
    # internal channels are read in ascending neighbour order (S2: x1 then x4)
    edges = [(0, 1), (3, 1), (1, 2), (2, 3)]
    return TrafficNetwork(models, edges, [tuple(b_) for b_ in params.safe], params, sign_convention)


# ---------------------------------------------------------------- microgrid
@dataclass(frozen=True)
class MicrogridParams:
    C: tuple = (2.2e-6, 1.9e-6, 1.5e-6, 1.7e-6, 1.7e-6)            # F
    lines: tuple = (((1, 2), 5.2), ((1, 3), 4.6), ((1, 4), 4.5), ((2, 4), 6.0), ((2, 5), 3.1), ((3, 4), 5.6))
    V_nom: float = 450.0                                             # V
    delta_frac: float = 0.025
    tau: float = 1e-4                                                # s
    sources: tuple = (2, 3)
    loads: tuple = (1, 4, 5)
    u_max: float = 8000.0                                            # W
    n_d: int = 5
    n_u: int = 5
    # (demand before, demand after, switching time) per load unit, in W and s
    profiles: tuple = ((1, 300.0, 1000.0, 0.25), (4, 300.0, 1000.0, 0.25), (5, 400.0, 1000.0, 0.25))
    noise: float = 0.02
    horizon: float = 0.75                                            # s
    steps: int = 2000                                                # integrator steps per sampling period

    def __post_init__(self):
        if min(self.C) <= 0:
            raise ValueError("capacitances must be positive")
        if self.tau <= 0:
            raise ValueError("sampling period must be positive")

    @property
    def delta(self) -> float:
        return self.delta_frac * self.V_nom

    @property
    def band(self) -> tuple[float, float]:
        return self.V_nom - self.delta, self.V_nom + self.delta


def _units(topology) -> int:
    n = {"4-unit": 4, "5-unit": 5, 4: 4, 5: 5}.get(topology)
    if n is None:
        raise ValueError(f"unknown topology {topology!r}")
    return n


def conductance_matrix(params: MicrogridParams = MicrogridParams(), topology="5-unit") -> np.ndarray:
    """Symmetric line-conductance matrix G_ij (S) over the units of the topology."""
    n = _units(topology)
    G = np.zeros((n, n))
    for (i, j), g in params.lines:
        if i <= n and j <= n:
            G[i - 1, j - 1] = G[j - 1, i - 1] = g
    return G


def laplacian(params: MicrogridParams = MicrogridParams(), topology="5-unit") -> np.ndarray:
    """L = B diag(G_e) B^T, built from the line conductances."""
    G = conductance_matrix(params, topology)
    return np.diag(G.sum(axis=1)) - G


def injected_power(u_kw, P_kw, params: MicrogridParams = MicrogridParams(), topology="5-unit") -> np.ndarray:
    """Per-unit injected power in W: +u for sources, -P for loads (inputs in kW)."""
    n = _units(topology)
    u_kw = np.asarray(u_kw, dtype=float)
    P_kw = np.asarray(P_kw, dtype=float)
    srcs = [k for k in params.sources if k <= n]
    lds = [k for k in params.loads if k <= n]
    s = np.zeros(u_kw.shape[:-1] + (n,))
    for a, k in enumerate(srcs):
        s[..., k - 1] = 1e3 * u_kw[..., a]
    for a, k in enumerate(lds):
        s[..., k - 1] = -1e3 * P_kw[..., a]
    return s


def microgrid_field(V, u, P, params: MicrogridParams = MicrogridParams(), topology="5-unit") -> np.ndarray:
    """dV/dt = C^-1 (-(L + G) V + s / V) with zero shunt conductance; u, P in kW."""
    V = np.asarray(V, dtype=float)
    if (V <= 0).any():
        raise DomainError("bus voltages must be positive")
    n = _units(topology)
    L = laplacian(params, topology)
    s = injected_power(u, P, params, topology)
    C = np.asarray(params.C[:n])
    return (-(V @ L.T) + s / V) / C


@dataclass
class MicrogridNetwork:
    models: list
    edges: list
    params: MicrogridParams
    topology: str
    n: int
    load_bounds: dict = field(default_factory=dict)

    def neighbors(self, i):
        return sorted(j for j, k in self.edges if k == i)

    @property
    def M_hat(self) -> tuple:
        w = 2 * self.params.delta / self.params.n_d
        return tuple([w] * self.n)


def load_bounds(params: MicrogridParams = MicrogridParams(), unit: int = 1) -> tuple[float, float]:
    """Demand interval in W: profile extrema widened by the noise amplitude."""
    for k, before, after, _ in params.profiles:
        if k == unit:
            return min(before, after) * (1 - params.noise), max(before, after) * (1 + params.noise)
    raise ValueError(f"unit {unit} is not a load")


def load_profile(params: MicrogridParams, t, unit: int, rng: np.random.Generator | None = None) -> float:
    """Demand of a load unit at time t (W); uniform +-noise around the step profile when rng is given."""
    for k, before, after, t_sw in params.profiles:
        if k == unit:
            base = before if t < t_sw else after
            if rng is not None:
                base *= 1 + rng.uniform(-params.noise, params.noise)
            return float(base)
    raise ValueError(f"unit {unit} is not a load")


def microgrid_network(topology="5-unit", params: MicrogridParams = MicrogridParams(), steps=None) -> MicrogridNetwork:
    """One scalar sampled model per unit; internal inputs are the neighbour voltages."""
    n = _units(topology)
    G = conductance_matrix(params, topology)
    edges = sorted({(j, i) for i in range(n) for j in range(n) if G[i, j] > 0})
    models, bounds = [], {}
    u_grid = np.linspace(0.0, params.u_max, params.n_u).reshape(-1, 1)
    for i in range(n):
        unit = i + 1
        nb = [j for j in range(n) if G[i, j] > 0]
        source = unit in params.sources
        if source:
            P_lo = P_hi = 0.0
            U = u_grid
        else:
            P_lo, P_hi = load_bounds(params, unit)
            bounds[unit] = (P_lo, P_hi)
            U = np.zeros((1, 0))
        models.append(SampledContinuousModel(
            params.C[i], G[i, nb], params.tau, U, P_lo, P_hi, source, int(steps or params.steps),
            name=f"unit{unit}"))
    return MicrogridNetwork(models, edges, params, f"{n}-unit", n, bounds)


# ------------------------------------------------------------------- plants
def microgrid_composed_step(net: MicrogridNetwork, V, s_w, steps=None) -> np.ndarray:
    """The concrete composed system: each unit sampled with its neighbour voltages held over tau."""
    V = np.asarray(V, dtype=float)
    out = np.empty_like(V)
    for i, m in enumerate(net.models):
        nb = net.neighbors(i)
        h = V[nb] @ m.coupling
        out[i] = kernels.rk4_scalar(np.array([V[i]]), m.g, np.array([h]), np.array([s_w[i]]),
                                    m.capacitance, m.tau, int(steps or m.steps))[0]
    return out


def microgrid_network_step(net: MicrogridNetwork, V, s_w, steps=None) -> np.ndarray:
    """The fully coupled ODE over one sampling period (inputs held)."""
    L = laplacian(net.params, net.topology)
    C = np.asarray(net.params.C[:net.n])
    out = kernels.rk4_network(np.asarray(V, dtype=float).reshape(1, -1).copy(), L,
                              np.asarray(s_w, dtype=float).reshape(1, -1).copy(), C,
                              net.params.tau, int(steps or net.params.steps))
    return out[0]


# --------------------------------------------------------------- simulation
class Uncontrollable(Exception):
    pass


@dataclass
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    safe: np.ndarray
    times: np.ndarray
    status: str = "ok"
    state_names: list = field(default_factory=list)
    input_names: list = field(default_factory=list)
    state_scale: float = 1.0

    @property
    def all_safe(self) -> bool:
        return self.status == "ok" and bool(self.safe.all())

    def rows(self):
        for k in range(len(self.states)):
            u = self.inputs[k] if k < len(self.inputs) else np.full(self.inputs.shape[1], np.nan)
            yield [k, float(self.times[k])] + [float(v) * self.state_scale for v in self.states[k]] \
                + [float(a) for a in u] + [int(self.safe[k])]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time"] + self.state_names + self.input_names + ["safe"])
        for r in self.rows():
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in r])
        if self.status != "ok":
            w.writerow([self.status])
        text = buf.getvalue()
        if path:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def simulate_closed_loop(step, feedback, x0, steps: int, is_safe, dt: float = 1.0,
                         state_names=None, input_names=None, n_inputs=None) -> Trajectory:
    """Run x_{k+1} = step(k, x_k, u_k) with u_k = feedback(k, x_k).

    ``feedback`` may raise :class:`Uncontrollable` (or any exception with that
    name), which ends the run with an "uncontrollable" record.
    """
    xs = [np.asarray(x0, dtype=float)]
    us = []
    status = "ok"
    for k in range(int(steps)):
        try:
            u = np.asarray(feedback(k, xs[-1]), dtype=float)
        except Exception as exc:            # noqa: BLE001 - report, do not crash
            if type(exc).__name__ not in ("Uncontrollable", "UncontrollableError"):
                raise
            status = "uncontrollable"
            break
        us.append(u)
        xs.append(np.asarray(step(k, xs[-1], u), dtype=float))
    X = np.array(xs)
    m = n_inputs if n_inputs is not None else (len(us[0]) if us else 0)
    U = np.array(us).reshape(len(us), m)
    safe = np.array([bool(is_safe(x)) for x in X])
    return Trajectory(X, U, safe, np.arange(len(X)) * dt, status,
                      list(state_names or [f"x{i + 1}" for i in range(X.shape[1])]),
                      list(input_names or [f"u{i + 1}" for i in range(m)]))
