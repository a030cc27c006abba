"""Dynamic-expectation-maximization observer for LTI systems.

The observer tracks generalized states and inputs X = [x_tilde; v_tilde] by
gradient ascent on the variational free energy V(t), the negative
precision-weighted squared prediction error. Because V is quadratic in X the
ascent collapses to a constant-coefficient linear ODE

    dX/dt = drift @ X + drive @ [y_tilde; -eta_tilde]

whose drift is the generalized shift minus the learning rate times the
(constant) negative free-energy curvature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, expm

from .errors import DivergenceError, ObserverDesignError
from .gencoord import GeneralizedVector, embed_series, lift_matrix, shift_matrix
from .noise import GeneralizedPrecision, NoiseSpec, generalized_precision
from .systems import ExperimentData, LtiModel, is_observable

# Relative tolerance of the assembly self-check (two independent
# constructions of the curvature must agree).
_SELF_CHECK_RTOL = 1e-10


@dataclass(frozen=True)
class DemConfig:
    """Observer settings.

    p, d: embedding orders for states and inputs (p >= d >= 0).
    learning_rate: gradient-ascent gain in 1/s; None picks a default from
        the curvature spectrum at assembly time.
    noise: smoothness and precisions assumed by the observer.
    eta_v: prior input mean; its generalized lift has zero derivative blocks
        (a constant prior does not move).
    dt: sampling interval of the data the observer will consume.
    integrator: "expm" advances the estimate ODE exactly under a zero-order
        hold; "euler" is a cross-checking fallback.
    """

    p: int
    d: int
    noise: NoiseSpec
    eta_v: np.ndarray
    dt: float
    learning_rate: float | None = None
    integrator: str = "expm"

    def __post_init__(self):
        if self.d < 0 or self.p < self.d:
            raise ValueError("need p >= d >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.integrator not in ("expm", "euler"):
            raise ValueError("integrator must be 'expm' or 'euler'")
        eta = np.asarray(self.eta_v, dtype=float).reshape(-1)
        object.__setattr__(self, "eta_v", eta)


def generalized_prior(eta_v, d: int) -> np.ndarray:
    """Lift a constant prior mean: value block eta_v, derivative blocks zero."""
    eta_v = np.asarray(eta_v, dtype=float).reshape(-1)
    out = np.zeros(eta_v.size * (d + 1))
    out[:eta_v.size] = eta_v
    return out


@dataclass(frozen=True)
class ObserverMatrices:
    """Assembled constant matrices defining one observer instance."""

    drift: np.ndarray            # shift - rate * curvature
    drive: np.ndarray            # maps [y_tilde; -eta_tilde] into dX/dt
    curvature: np.ndarray        # negative Hessian of V; estimate precision
    shift: np.ndarray            # block-diag generalized derivative operator
    precision: GeneralizedPrecision
    lifted_a: np.ndarray
    lifted_b: np.ndarray
    lifted_c: np.ndarray
    shift_x: np.ndarray
    rate: float
    n: int
    r: int
    m: int
    p: int
    d: int
    dt: float
    _step_cache: dict = field(default_factory=dict, repr=False)

    @property
    def state_dim(self) -> int:
        return self.n * (self.p + 1)

    @property
    def input_dim(self) -> int:
        return self.r * (self.d + 1)

    @property
    def total_dim(self) -> int:
        return self.state_dim + self.input_dim

    def discrete_step(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Zero-order-hold discretization of (drift, drive), cached per dt."""
        cached = self._step_cache.get(dt)
        if cached is None:
            n_x = self.total_dim
            n_u = self.drive.shape[1]
            block = np.zeros((n_x + n_u, n_x + n_u))
            block[:n_x, :n_x] = self.drift
            block[:n_x, n_x:] = self.drive
            phi = expm(block * dt)
            cached = (phi[:n_x, :n_x], phi[:n_x, n_x:])
            self._step_cache[dt] = cached
        return cached


def prediction_error(m: ObserverMatrices, x_full: np.ndarray,
                     y_gen: np.ndarray, eta_gen: np.ndarray) -> np.ndarray:
    """Stacked prediction error: output, input-prior, and state-dynamics
    blocks, in that order."""
    x_full = np.asarray(x_full, dtype=float).reshape(-1)
    if x_full.size != m.total_dim:
        raise ValueError("estimate dimension mismatch")
    y_gen = np.asarray(y_gen, dtype=float).reshape(-1)
    eta_gen = np.asarray(eta_gen, dtype=float).reshape(-1)
    if y_gen.size != m.m * (m.p + 1):
        raise ValueError("generalized output dimension mismatch")
    if eta_gen.size != m.input_dim:
        raise ValueError("generalized prior dimension mismatch")
    x_t = x_full[:m.state_dim]
    v_t = x_full[m.state_dim:]
    eps_y = y_gen - m.lifted_c @ x_t
    eps_v = v_t - eta_gen
    eps_x = m.shift_x @ x_t - m.lifted_a @ x_t - m.lifted_b @ v_t
    return np.concatenate([eps_y, eps_v, eps_x])


def error_jacobian(m: ObserverMatrices) -> np.ndarray:
    """Constant Jacobian of the prediction error with respect to X."""
    i_v = np.eye(m.input_dim)
    zero_top = np.zeros((m.m * (m.p + 1), m.input_dim))
    zero_mid = np.zeros((m.input_dim, m.state_dim))
    top = np.hstack([-m.lifted_c, zero_top])
    mid = np.hstack([zero_mid, i_v])
    bot = np.hstack([m.shift_x - m.lifted_a, -m.lifted_b])
    return np.vstack([top, mid, bot])


def free_energy(eps: np.ndarray, pi) -> float:
    """V = -1/2 eps' Pi eps; non-positive for any PSD precision."""
    eps = np.asarray(eps, dtype=float).reshape(-1)
    matrix = pi.matrix if isinstance(pi, GeneralizedPrecision) else np.asarray(pi, dtype=float)
    quad = float(eps @ (matrix @ eps))
    if quad < 0.0:
        quad = 0.0  # rounding guard; the quadratic form is PSD
    return -0.5 * quad


def free_energy_gradient(m: ObserverMatrices, x_full: np.ndarray,
                         y_gen: np.ndarray, eta_gen: np.ndarray) -> np.ndarray:
    """Analytic gradient of V with respect to X."""
    eps = prediction_error(m, x_full, y_gen, eta_gen)
    return -(error_jacobian(m).T @ (m.precision.matrix @ eps))


def assemble_observer(model: LtiModel, cfg: DemConfig,
                      rate: float | None = None) -> ObserverMatrices:
    """Build the observer matrices for a plant/configuration pair.

    The curvature is assembled from its closed-form blocks and cross-checked
    against the quadratic form J' Pi J built from the error Jacobian; any
    disagreement indicates a construction bug and aborts.
    """
    if not is_observable(model):
        raise ObserverDesignError("plant (A, C) is not observable")
    if cfg.noise.n != model.n or cfg.noise.m != model.m or cfg.noise.r != model.r:
        raise ObserverDesignError("noise precision dimensions do not match plant")
    if cfg.eta_v.size != model.r:
        raise ObserverDesignError("prior mean dimension does not match inputs")
    p, d = cfg.p, cfg.d
    n, r, m_dim = model.n, model.r, model.m

    shift_x = shift_matrix(p, n)
    shift_v = shift_matrix(d, r)
    shift_full = block_diag(shift_x, shift_v)
    lifted_a = lift_matrix(model.a, p)
    lifted_b = lift_matrix(model.b, p, col_order=d)
    lifted_c = lift_matrix(model.c, p)
    pi = generalized_precision(cfg.noise, p, d)

    d_a = shift_x - lifted_a
    wt_da = pi.state_block @ d_a
    top_left = lifted_c.T @ pi.output_block @ lifted_c + d_a.T @ wt_da
    top_right = -d_a.T @ (pi.state_block @ lifted_b)
    bottom_right = pi.input_block + lifted_b.T @ (pi.state_block @ lifted_b)
    curvature = np.block([[top_left, top_right],
                          [top_right.T, bottom_right]])
    curvature = 0.5 * (curvature + curvature.T)

    if rate is None:
        rate = cfg.learning_rate
    if rate is None:
        rate = default_learning_rate(curvature, shift_full)

    # The drive must carry the learning rate for the ODE equilibrium to sit
    # at the free-energy maximum.
    drive = np.zeros((n * (p + 1) + r * (d + 1),
                      m_dim * (p + 1) + r * (d + 1)))
    drive[:n * (p + 1), :m_dim * (p + 1)] = rate * (lifted_c.T @ pi.output_block)
    drive[n * (p + 1):, m_dim * (p + 1):] = -rate * pi.input_block
    drift = shift_full - rate * curvature

    matrices = ObserverMatrices(
        drift=drift, drive=drive, curvature=curvature, shift=shift_full,
        precision=pi, lifted_a=lifted_a, lifted_b=lifted_b, lifted_c=lifted_c,
        shift_x=shift_x, rate=float(rate),
        n=n, r=r, m=m_dim, p=p, d=d, dt=cfg.dt,
    )

    jac = error_jacobian(matrices)
    quad_form = jac.T @ pi.matrix @ jac
    scale = max(1.0, float(np.abs(curvature).max()))
    if np.abs(curvature - quad_form).max() > _SELF_CHECK_RTOL * scale:
        raise ObserverDesignError(
            "curvature self-check failed: block assembly disagrees with the "
            "error-Jacobian quadratic form")
    return matrices


def default_learning_rate(curvature: np.ndarray, shift_full: np.ndarray,
                          target_rate: float = 0.5,
                          rank_cutoff: float = 1e-9) -> float:
    """Rate at which the slowest informative direction decays at target_rate.

    target_rate defaults to 5 / (10 s), i.e. several convergence times within
    a standard experiment horizon. Directions whose curvature falls below
    rank_cutoff relative to the largest carry essentially no information;
    chasing them would demand rates so large that the discrete step loses
    accuracy, so they are excluded and only checked for stability.
    """
    eigs = np.linalg.eigvalsh(curvature)
    lam_max = float(eigs[-1])
    if lam_max <= 0:
        raise ObserverDesignError("curvature is not positive semidefinite")
    informative = eigs[eigs > rank_cutoff * lam_max]
    k = target_rate / float(informative[0])
    for _ in range(60):
        drift_eigs = np.linalg.eigvals(shift_full - k * curvature)
        if drift_eigs.real.max() <= 1e-9 * max(1.0, k * lam_max):
            return k
        k *= 2.0
    raise ObserverDesignError("no stable learning rate found")


def observer_step(m: ObserverMatrices, x_full: np.ndarray, y_gen: np.ndarray,
                  eta_gen: np.ndarray, dt: float | None = None,
                  method: str = "expm") -> np.ndarray:
    """Advance the estimate ODE by one step with the input held constant."""
    if dt is None:
        dt = m.dt
    u = np.concatenate([np.asarray(y_gen, dtype=float).reshape(-1),
                        -np.asarray(eta_gen, dtype=float).reshape(-1)])
    x_full = np.asarray(x_full, dtype=float).reshape(-1)
    if method == "euler":
        return x_full + dt * (m.drift @ x_full + m.drive @ u)
    if method != "expm":
        raise ValueError("method must be 'expm' or 'euler'")
    ad, bd = m.discrete_step(dt)
    return ad @ x_full + bd @ u


@dataclass(frozen=True)
class GeneralizedEstimate:
    """Generalized state/input estimate with its (constant) precisions."""

    x_gen: GeneralizedVector
    v_gen: GeneralizedVector
    state_precision: np.ndarray
    input_precision: np.ndarray


@dataclass(frozen=True)
class ObserverRun:
    """Trajectory of estimates with the free-energy trace."""

    estimates: np.ndarray        # (T, state_dim + input_dim)
    vfe: np.ndarray              # (T,)
    states: np.ndarray           # (T, n) value block of x_tilde
    inputs: np.ndarray           # (T, r) value block of v_tilde
    state_precision: np.ndarray
    input_precision: np.ndarray
    matrices: ObserverMatrices

    def estimate_at(self, t: int) -> GeneralizedEstimate:
        m = self.matrices
        x_full = self.estimates[t]
        return GeneralizedEstimate(
            x_gen=GeneralizedVector(m.n, m.p, x_full[:m.state_dim]),
            v_gen=GeneralizedVector(m.r, m.d, x_full[m.state_dim:]),
            state_precision=self.state_precision,
            input_precision=self.input_precision,
        )


def run_observer(model: LtiModel, cfg: DemConfig, data: ExperimentData,
                 known_inputs: bool = False, x0=None) -> ObserverRun:
    """Replay a record through the observer.

    Each step embeds the measurement window into a generalized output and
    advances the estimate ODE. With ``known_inputs`` the input block is
    clamped to the embedded measured inputs after every step (the state
    benchmarking mode); otherwise inputs are estimated against the prior.
    """
    if data.measurements.shape[1] != model.m:
        raise ValueError("measurement dimension does not match plant output")
    if data.n_steps < cfg.p + 1:
        raise ValueError("record shorter than the embedding window")
    m = assemble_observer(model, cfg)
    y_gen_series = embed_series(data.measurements, data.dt, cfg.p)
    eta_gen = generalized_prior(cfg.eta_v, cfg.d)
    if known_inputs:
        v_gen_series = embed_series(data.inputs, data.dt, cfg.d)

    n_steps = data.n_steps
    x_full = np.zeros(m.total_dim) if x0 is None \
        else np.asarray(x0, dtype=float).reshape(-1).copy()
    estimates = np.empty((n_steps, m.total_dim))
    vfe = np.empty(n_steps)
    for t in range(n_steps):
        x_full = observer_step(m, x_full, y_gen_series[t], eta_gen,
                               dt=data.dt, method=cfg.integrator)
        if known_inputs:
            x_full[m.state_dim:] = v_gen_series[t]
        if not np.all(np.isfinite(x_full)):
            raise DivergenceError(t, "non-finite estimate")
        estimates[t] = x_full
        eps = prediction_error(m, x_full, y_gen_series[t], eta_gen)
        vfe[t] = free_energy(eps, m.precision)

    state_prec, input_prec = estimate_precision(m)
    return ObserverRun(
        estimates=estimates,
        vfe=vfe,
        states=estimates[:, :model.n],
        inputs=estimates[:, m.state_dim:m.state_dim + model.r],
        state_precision=state_prec,
        input_precision=input_prec,
        matrices=m,
    )


def estimate_precision(m: ObserverMatrices) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal blocks of the curvature: precisions of the generalized state
    and input estimates. Constant over a run by construction."""
    sd = m.state_dim
    return m.curvature[:sd, :sd].copy(), m.curvature[sd:, sd:].copy()


@dataclass(frozen=True)
class LandscapeResult:
    """Free energy at an estimate versus perturbed probes around it."""

    v_at_estimate: float
    probe_values: np.ndarray     # (n_directions, n_magnitudes)
    max_probe: float
    passed: bool


def free_energy_landscape(m: ObserverMatrices, x_hat: np.ndarray,
                          y_gen: np.ndarray, eta_gen: np.ndarray,
                          directions: np.ndarray, magnitudes,
                          slack: float = 1e-8) -> LandscapeResult:
    """Probe V around an estimate and check it sits at the top.

    Directions are used as given (normalize beforehand if unit steps are
    wanted); the slack absorbs embedding truncation at the probed time.
    """
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    magnitudes = np.asarray(magnitudes, dtype=float).reshape(-1)
    v_hat = free_energy(prediction_error(m, x_hat, y_gen, eta_gen), m.precision)
    values = np.empty((directions.shape[0], magnitudes.size))
    for i, direction in enumerate(directions):
        for j, mag in enumerate(magnitudes):
            eps = prediction_error(m, x_hat + mag * direction, y_gen, eta_gen)
            values[i, j] = free_energy(eps, m.precision)
    max_probe = float(values.max()) if values.size else v_hat
    return LandscapeResult(
        v_at_estimate=v_hat,
        probe_values=values,
        max_probe=max_probe,
        passed=bool(v_hat >= max_probe - slack),
    )


def sweep_learning_rate(model: LtiModel, cfg: DemConfig, data: ExperimentData,
                        rates, known_inputs: bool = True,
                        skip_steps: int = 0) -> list[tuple[float, float]]:
    """SSE of the roll-rate estimate against truth for each candidate rate.

    Utility for tuning the gradient-ascent gain on a representative record;
    requires ground truth in the data.
    """
    if data.truth_states is None:
        raise ValueError("rate sweep needs ground-truth states")
    results = []
    for rate in rates:
        trial = DemConfig(p=cfg.p, d=cfg.d, noise=cfg.noise, eta_v=cfg.eta_v,
                          dt=cfg.dt, learning_rate=float(rate),
                          integrator=cfg.integrator)
        run = run_observer(model, trial, data, known_inputs=known_inputs)
        err = run.states[skip_steps:] - data.truth_states[skip_steps:]
        results.append((float(rate), float(np.sum(err ** 2))))
    return results
