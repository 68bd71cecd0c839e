"""
Langevin Samplers

SGLD, LS-SGLD, pSGLD, LS-pSGLD, fine-step LD / LS-LD references and a
random-walk Metropolis-Hastings ground-truth chain.

Every chain owns two random streams split from its seed: one for mini-batches,
one for Gaussian noise. With sigma = 0 the smoothed kinds consume exactly the
same draws as their plain counterparts and produce identical trajectories.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from errors import (ChainDivergenceError, ConfigValidationError, DimensionError, InsufficientSamplesError,
                    UnsupportedTargetError)
from reports import write_csv_report, write_json
from smoothing_operator import (LaplacianOperator, apply_inverse, apply_inverse_sqrt,
                                build, step_size_multiplier)
from targets import TargetModel

logger = logging.getLogger(__name__)

KINDS = ('sgld', 'ls_sgld', 'psgld', 'ls_psgld', 'ld_reference', 'ls_ld_reference', 'mh_reference')
SMOOTHED_KINDS = ('ls_sgld', 'ls_psgld', 'ls_ld_reference')
PRECONDITIONED_KINDS = ('psgld', 'ls_psgld')
REFERENCE_KINDS = ('ld_reference', 'ls_ld_reference')
FULL_GRADIENT_KINDS = ('sgld', 'ls_sgld') + REFERENCE_KINDS
LS_ORDERS = ('smooth_after_precondition', 'precondition_after_smooth')

# LD / LS-LD references use eta / REFERENCE_STEP_DIVISOR with the full gradient
REFERENCE_STEP_DIVISOR = 100.0


@dataclass(frozen=True)
class SamplerSpec:
    """Hyperparameters of one chain."""
    kind: str
    eta: float
    batch_size: int = 1
    iterations: int = 1000
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    beta: float = 1.0
    sigma: float = 0.0
    precond_alpha: float = 0.99
    precond_eps: float = 1e-5
    scale_step_for_smoothing: bool = False
    ls_order: str = 'smooth_after_precondition'
    # debug switch: force the preconditioner to G = 1
    unit_preconditioner: bool = False
    eta_schedule: Optional[Tuple[float, ...]] = None

    @property
    def smoothed(self) -> bool:
        return self.kind in SMOOTHED_KINDS

    def validate(self, n: Optional[int] = None) -> List[str]:
        """Return a list of field errors (empty when the spec is usable)."""
        errors = []
        if self.kind not in KINDS:
            errors.append(f"kind: unknown sampler {self.kind!r} (expected one of {', '.join(KINDS)})")
        if not self.eta > 0:
            errors.append(f"eta: must be > 0, got {self.eta}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            errors.append(f"iterations: must be a positive integer, got {self.iterations}")
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            errors.append(f"burn_in, iterations: burn_in must be in [0, iterations), got {self.burn_in}")
        if self.thin < 1:
            errors.append(f"thin: must be >= 1, got {self.thin}")
        if not self.beta > 0:
            errors.append(f"beta: must be > 0, got {self.beta}")
        if self.sigma < 0:
            errors.append(f"sigma: must be >= 0, got {self.sigma}")
        elif self.sigma > 0 and self.kind in KINDS and not self.smoothed:
            errors.append(f"sigma, kind: sigma={self.sigma} requires a smoothed kind, got {self.kind!r}")
        if self.batch_size < 1:
            errors.append(f"batch_size: must be >= 1, got {self.batch_size}")
        elif n is not None and self.batch_size > n and self.kind not in REFERENCE_KINDS + ('mh_reference',):
            errors.append(f"batch_size, n: batch_size={self.batch_size} exceeds n={n}")
        if not 0.0 <= self.precond_alpha <= 1.0:
            errors.append(f"precond_alpha: must be in [0, 1], got {self.precond_alpha}")
        if not self.precond_eps > 0:
            errors.append(f"precond_eps: must be > 0, got {self.precond_eps}")
        if self.ls_order not in LS_ORDERS:
            errors.append(f"ls_order: expected one of {', '.join(LS_ORDERS)}, got {self.ls_order!r}")
        if self.eta_schedule is not None:
            if len(self.eta_schedule) != self.iterations:
                errors.append(f"eta_schedule, iterations: schedule has {len(self.eta_schedule)} entries "
                              f"for {self.iterations} iterations")
            elif min(self.eta_schedule) <= 0:
                errors.append("eta_schedule: every step size must be > 0")
        return errors

    def step_sizes(self, op: Optional[LaplacianOperator] = None) -> np.ndarray:
        """Per-step step sizes after the smoothing multiplier and the reference divisor."""
        if self.eta_schedule is not None:
            etas = np.asarray(self.eta_schedule, dtype=float)
        else:
            etas = np.full(int(self.iterations), float(self.eta))
        if self.scale_step_for_smoothing and self.smoothed and op is not None:
            etas = etas * step_size_multiplier(op)
        if self.kind in REFERENCE_KINDS:
            etas = etas / REFERENCE_STEP_DIVISOR
        return etas

    def to_dict(self) -> dict:
        snapshot = asdict(self)
        if snapshot['eta_schedule'] is not None:
            snapshot['eta_schedule'] = list(snapshot['eta_schedule'])
        return snapshot


@dataclass
class ChainState:
    """Evolving state of one chain. The random streams advance in place."""
    x: np.ndarray
    k: int
    batch_rng: np.random.Generator
    noise_rng: np.random.Generator
    v_acc: Optional[np.ndarray] = None
    log_density: Optional[float] = None
    accepted: int = 0


@dataclass
class SampleChain:
    """Post-burn-in, thinned record of one chain."""
    samples: np.ndarray
    steps: np.ndarray
    etas: np.ndarray
    eta_schedule: np.ndarray
    burn_in: int
    thin: int
    seed: int
    spec: SamplerSpec
    acceptance_rate: Optional[float] = None

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def window(self, start: int, stop: int) -> 'SampleChain':
        """Recorded samples [start, stop) as a chain of their own."""
        return replace(self, samples=self.samples[start:stop], steps=self.steps[start:stop],
                       etas=self.etas[start:stop])

    def to_csv(self, path) -> Path:
        """Columns: step, eta, x_0 .. x_{d-1}."""
        fieldnames = ['step', 'eta'] + [f"x_{j}" for j in range(self.d)]
        rows = ({'step': int(s), 'eta': float(e), **{f"x_{j}": float(v) for j, v in enumerate(x)}}
                for s, e, x in zip(self.steps, self.etas, self.samples))
        return write_csv_report(path, fieldnames, rows)

    def write_spec_snapshot(self, path) -> Path:
        document = {'spec': self.spec.to_dict(), 'recorded': len(self),
                    'burn_in': self.burn_in, 'thin': self.thin, 'seed': self.seed}
        if self.acceptance_rate is not None:
            document['acceptance_rate'] = self.acceptance_rate
        return write_json(path, document)

    def spec_snapshot(self) -> str:
        return json.dumps(self.spec.to_dict(), indent=2, sort_keys=True)


def init_state(spec: SamplerSpec, model: TargetModel, x0=None) -> ChainState:
    """Start at x0 (zero by default) with streams split from spec.seed."""
    batch_seq, noise_seq = np.random.SeedSequence(int(spec.seed)).spawn(2)
    x = np.zeros(model.d) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (model.d,):
        raise DimensionError(f"x0 must have shape ({model.d},), got {x.shape}")
    v_acc = np.zeros(model.d) if spec.kind in PRECONDITIONED_KINDS else None
    return ChainState(x=x, k=0, batch_rng=np.random.default_rng(batch_seq),
                      noise_rng=np.random.default_rng(noise_seq), v_acc=v_acc)


def draw_batch(state: ChainState, n: int, batch_size: int) -> np.ndarray:
    """Uniform batch without replacement; the whole index set when batch_size >= n."""
    if batch_size >= n:
        return np.arange(n)
    return state.batch_rng.choice(n, size=batch_size, replace=False)


def _noise_scale(eta: float, beta: float) -> float:
    return float(np.sqrt(2.0 * eta / beta))


def _check_operator(op: LaplacianOperator, model: TargetModel) -> None:
    if op.d != model.d:
        raise DimensionError(f"operator dimension {op.d} does not match target dimension {model.d}")


def sgld_step(state: ChainState, model: TargetModel, spec: SamplerSpec,
              eta: Optional[float] = None) -> ChainState:
    """x' = x - eta g + sqrt(2 eta / beta) eps."""
    eta = spec.eta if eta is None else eta
    g = model.batch_grad(state.x, draw_batch(state, model.n, spec.batch_size))
    eps = state.noise_rng.standard_normal(model.d)
    x = state.x - eta * g + _noise_scale(eta, spec.beta) * eps
    return replace(state, x=x, k=state.k + 1)


def ls_sgld_step(state: ChainState, model: TargetModel, spec: SamplerSpec,
                 op: LaplacianOperator, eta: Optional[float] = None) -> ChainState:
    """x' = x - eta A^-1 g + sqrt(2 eta / beta) A^-1/2 eps."""
    _check_operator(op, model)
    eta = spec.eta if eta is None else eta
    g = model.batch_grad(state.x, draw_batch(state, model.n, spec.batch_size))
    eps = state.noise_rng.standard_normal(model.d)
    x = state.x - eta * apply_inverse(op, g) + _noise_scale(eta, spec.beta) * apply_inverse_sqrt(op, eps)
    return replace(state, x=x, k=state.k + 1)


def _preconditioner(spec: SamplerSpec, v_acc: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """RMSProp accumulator update; returns (v', G)."""
    alpha = spec.precond_alpha
    v_new = alpha * v_acc + (1.0 - alpha) * g * g
    if spec.unit_preconditioner:
        return v_new, np.ones_like(g)
    return v_new, 1.0 / (spec.precond_eps + np.sqrt(v_new))


def psgld_step(state: ChainState, model: TargetModel, spec: SamplerSpec,
               eta: Optional[float] = None) -> ChainState:
    """
    RMSProp-preconditioned SGLD without the curvature-correction drift.

    v' = alpha v + (1 - alpha) g*g,  G = 1 / (eps + sqrt(v'))
    x' = x - eta G*g + sqrt(2 eta / beta) sqrt(G)*eps
    """
    eta = spec.eta if eta is None else eta
    g = model.batch_grad(state.x, draw_batch(state, model.n, spec.batch_size))
    eps = state.noise_rng.standard_normal(model.d)
    v_acc, G = _preconditioner(spec, state.v_acc, g)
    x = state.x - eta * (G * g) + _noise_scale(eta, spec.beta) * (np.sqrt(G) * eps)
    return replace(state, x=x, k=state.k + 1, v_acc=v_acc)


def ls_psgld_step(state: ChainState, model: TargetModel, spec: SamplerSpec,
                  op: LaplacianOperator, eta: Optional[float] = None) -> ChainState:
    """
    Preconditioned and smoothed step.

    smooth_after_precondition:  x' = x - eta A^-1 (G*g) + c A^-1/2 (sqrt(G)*eps)
    precondition_after_smooth:  x' = x - eta G*(A^-1 g) + c sqrt(G)*(A^-1/2 eps),
                                with the accumulator fed by A^-1 g
    """
    _check_operator(op, model)
    eta = spec.eta if eta is None else eta
    g = model.batch_grad(state.x, draw_batch(state, model.n, spec.batch_size))
    eps = state.noise_rng.standard_normal(model.d)
    scale = _noise_scale(eta, spec.beta)

    if spec.ls_order == 'precondition_after_smooth':
        smoothed = apply_inverse(op, g)
        v_acc, G = _preconditioner(spec, state.v_acc, smoothed)
        x = state.x - eta * (G * smoothed) + scale * (np.sqrt(G) * apply_inverse_sqrt(op, eps))
    else:
        v_acc, G = _preconditioner(spec, state.v_acc, g)
        x = state.x - eta * apply_inverse(op, G * g) + scale * apply_inverse_sqrt(op, np.sqrt(G) * eps)
    return replace(state, x=x, k=state.k + 1, v_acc=v_acc)


def reference_step(state: ChainState, model: TargetModel, spec: SamplerSpec,
                   op: Optional[LaplacianOperator] = None, eta: Optional[float] = None) -> ChainState:
    """
    Full-gradient Euler-Maruyama step of LD (op=None) or LS-LD.

    eta is used as given; run_chain passes the reduced reference step.
    """
    eta = spec.eta / REFERENCE_STEP_DIVISOR if eta is None else eta
    g = model.full_grad(state.x)
    eps = state.noise_rng.standard_normal(model.d)
    scale = _noise_scale(eta, spec.beta)
    if op is None:
        x = state.x - eta * g + scale * eps
    else:
        _check_operator(op, model)
        x = state.x - eta * apply_inverse(op, g) + scale * apply_inverse_sqrt(op, eps)
    return replace(state, x=x, k=state.k + 1)


def mh_log_acceptance(log_p_from: float, log_p_to: float) -> float:
    """log min(1, p(to) / p(from)) for a symmetric proposal."""
    return min(0.0, log_p_to - log_p_from)


def mh_reference_step(state: ChainState, model: TargetModel, spec: SamplerSpec,
                      eta: Optional[float] = None) -> ChainState:
    """
    Random-walk Metropolis-Hastings with proposal x + s*eps, s = eta.

    The chain targets exp(beta * log_density_unnormalized).
    """
    if not model.has_log_density:
        raise UnsupportedTargetError(f"{type(model).__name__} has no log-density for MH")
    scale = spec.eta if eta is None else eta
    log_p = state.log_density
    if log_p is None:
        log_p = spec.beta * model.log_density_unnormalized(state.x)

    proposal = state.x + scale * state.noise_rng.standard_normal(model.d)
    log_p_new = spec.beta * model.log_density_unnormalized(proposal)
    u = state.noise_rng.random()
    if np.log(u) < mh_log_acceptance(log_p, log_p_new):
        return replace(state, x=proposal, k=state.k + 1, log_density=log_p_new,
                       accepted=state.accepted + 1)
    return replace(state, k=state.k + 1, log_density=log_p)


def _dispatch(spec: SamplerSpec, model: TargetModel, op: Optional[LaplacianOperator]):
    kind = spec.kind
    if kind == 'sgld':
        return lambda s, eta: sgld_step(s, model, spec, eta)
    if kind == 'ls_sgld':
        return lambda s, eta: ls_sgld_step(s, model, spec, op, eta)
    if kind == 'psgld':
        return lambda s, eta: psgld_step(s, model, spec, eta)
    if kind == 'ls_psgld':
        return lambda s, eta: ls_psgld_step(s, model, spec, op, eta)
    if kind == 'ld_reference':
        return lambda s, eta: reference_step(s, model, spec, None, eta)
    if kind == 'ls_ld_reference':
        return lambda s, eta: reference_step(s, model, spec, op, eta)
    return lambda s, eta: mh_reference_step(s, model, spec, eta)


def run_chain(spec: SamplerSpec, model: TargetModel, op: Optional[LaplacianOperator] = None,
              x0=None, progress: bool = False) -> SampleChain:
    """
    Run spec.iterations steps and keep x_k for k = burn_in+1 .. K with stride thin.

    Args:
        spec: Sampler hyperparameters
        model: Target
        op: Smoothing operator to share; built from spec.sigma when omitted
        x0: Starting point (zero when omitted)
        progress: Show a tqdm bar

    Returns:
        SampleChain, fully determined by (spec, model, x0)

    Raises:
        ChainDivergenceError: at the first step whose iterate is not finite
    """
    errors = spec.validate(model.n)
    if errors:
        raise ConfigValidationError(errors)

    if spec.smoothed:
        if op is None:
            op = build(model.d, spec.sigma)
        _check_operator(op, model)
    else:
        op = None

    K = int(spec.iterations)
    etas = spec.step_sizes(op)
    state = init_state(spec, model, x0)
    step = _dispatch(spec, model, op)

    n_keep = len(range(spec.burn_in + 1, K + 1, spec.thin))
    samples = np.empty((n_keep, model.d))
    steps = np.empty(n_keep, dtype=int)
    row = 0

    for k in tqdm(range(K), desc=spec.kind, disable=not progress, leave=False):
        state = step(state, etas[k])
        if not np.all(np.isfinite(state.x)):
            err = ChainDivergenceError(spec.kind, spec.seed, k + 1, float(etas[k]))
            logger.warning("%s", err)
            raise err
        kk = k + 1
        if kk > spec.burn_in and (kk - spec.burn_in - 1) % spec.thin == 0:
            samples[row] = state.x
            steps[row] = kk
            row += 1

    acceptance = state.accepted / K if spec.kind == 'mh_reference' else None
    if acceptance is not None:
        logger.info("MH chain seed %d: acceptance rate %.3f", spec.seed, acceptance)

    return SampleChain(samples=samples, steps=steps, etas=etas[steps - 1], eta_schedule=etas,
                       burn_in=spec.burn_in, thin=spec.thin, seed=spec.seed, spec=spec,
                       acceptance_rate=acceptance)


def run_chains(specs: Sequence[SamplerSpec], model: TargetModel, threads: int = 1,
               op: Optional[LaplacianOperator] = None, x0=None) -> List[SampleChain]:
    """
    Run independent chains, concurrently when threads > 1.

    The model and operator are shared read-only; each chain owns its streams,
    so the results do not depend on thread count or scheduling.
    """
    def run_one(spec: SamplerSpec) -> SampleChain:
        shared = op if (op is not None and spec.smoothed and op.sigma == spec.sigma) else None
        return run_chain(spec, model, op=shared, x0=x0)

    if threads <= 1 or len(specs) <= 1:
        return [run_one(s) for s in specs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_one, specs))


@dataclass
class EnsembleMoments:
    """Pooled post-burn-in moments of independent chains run in lockstep."""
    mean: np.ndarray
    covariance: np.ndarray
    count: int
    chains: int
    eta: float


def run_ensemble(spec: SamplerSpec, model: TargetModel, chains: int,
                 op: Optional[LaplacianOperator] = None, progress: bool = False) -> EnsembleMoments:
    """
    Advance independent full-gradient chains together from zero and pool their moments.

    Each step draws a (chains, d) block from the noise stream split from spec.seed, so
    a one-chain ensemble follows the same path as run_chain(spec, model). Only running
    sums of the kept iterates are stored.

    Raises:
        ConfigValidationError: for mini-batch or preconditioned kinds, or chains < 1
        ChainDivergenceError: at the first step with a non-finite iterate
        InsufficientSamplesError: when fewer than two iterates are kept
    """
    errors = spec.validate(model.n)
    if spec.kind not in FULL_GRADIENT_KINDS:
        errors.append(f"kind: ensembles need one of {', '.join(FULL_GRADIENT_KINDS)}, got {spec.kind!r}")
    elif spec.kind not in REFERENCE_KINDS and spec.batch_size < model.n:
        errors.append(f"batch_size, n: ensembles use the full gradient, got batch_size={spec.batch_size} "
                      f"for n={model.n}")
    if chains < 1:
        errors.append(f"chains: must be >= 1, got {chains}")
    if errors:
        raise ConfigValidationError(errors)

    if spec.smoothed:
        if op is None:
            op = build(model.d, spec.sigma)
        _check_operator(op, model)
    else:
        op = None

    etas = spec.step_sizes(op)
    _, noise_seq = np.random.SeedSequence(int(spec.seed)).spawn(2)
    noise_rng = np.random.default_rng(noise_seq)
    X = np.zeros((chains, model.d))
    total = np.zeros(model.d)
    outer = np.zeros((model.d, model.d))
    count = 0

    for k in tqdm(range(int(spec.iterations)), desc=f"{spec.kind} x{chains}", disable=not progress, leave=False):
        eta = float(etas[k])
        g = model.full_grad_rows(X)
        eps = noise_rng.standard_normal((chains, model.d))
        scale = _noise_scale(eta, spec.beta)
        if op is None:
            X = X - eta * g + scale * eps
        else:
            X = X - eta * apply_inverse(op, g) + scale * apply_inverse_sqrt(op, eps)
        if not np.all(np.isfinite(X)):
            err = ChainDivergenceError(spec.kind, spec.seed, k + 1, eta)
            logger.warning("%s", err)
            raise err
        kk = k + 1
        if kk > spec.burn_in and (kk - spec.burn_in - 1) % spec.thin == 0:
            total += X.sum(axis=0)
            outer += X.T @ X
            count += chains

    if count < 2:
        raise InsufficientSamplesError(f"ensemble kept {count} iterates, need >= 2")
    mean = total / count
    covariance = (outer - count * np.outer(mean, mean)) / (count - 1)
    logger.info("%s ensemble of %d chains: %d pooled iterates", spec.kind, chains, count)
    return EnsembleMoments(mean=mean, covariance=covariance, count=count, chains=chains, eta=float(etas[0]))
