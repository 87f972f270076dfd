"""Variance-reduced finite-sum methods under arbitrary sampling.

Implements the anchored (SVRG), memory-based (SAGA) and recursive (SARAH)
gradient estimators with importance-weighted minibatches, a restart wrapper
for gradient-dominated objectives, the single-sample convex SARAH variant,
theorem-driven hyperparameter derivation and closed-form cost predictors.

All runs are deterministic per seed: one substream drives the subset draws,
a second drives the uniform-over-iterates output selection, so the iterate
trajectory does not depend on whether an output is being selected.
"""

from __future__ import annotations

import enum
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .problems import (
    Problem,
    _scalar_slope,
    full_gradient,
    loss_value,
)
from .sampling import SamplingScheme, compute_alpha, draw

MU2 = 0.25        # step constant of the anchored method's theorem
NU2 = 1.0 / 40.0  # rate constant of the anchored method's theorem
MU3 = 1.0 / 3.0   # step constant of the memory method's theorem
NU3 = 1.0 / 12.0  # rate constant of the memory method's theorem

DIVERGENCE_LIMIT = 1e100


class Method(enum.Enum):
    SVRG = "svrg"
    SAGA = "saga"
    SARAH = "sarah"
    SARAH_CONVEX = "sarah-convex"
    GD_WRAPPER = "gd-wrapper"


class ConfigError(ValueError):
    """Hyperparameters violate a theorem precondition or are inconsistent."""


class DivergenceError(RuntimeError):
    """Iterates left the finite range; carries the last finite trace."""

    def __init__(self, message: str, trace: "RunTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class RunConfig:
    """Everything a run needs; derive_* fill theorem-mandated values.

    ``beta`` is a proof-only parameter recorded for traceability; the
    algorithms never read it.
    """

    method: Method
    scheme: SamplingScheme | None
    eta: float
    m: int = 1                 # inner-loop length (anchored / recursive methods)
    outer: int = 1             # number of outer loops M
    steps: int = 0             # total steps T (memory method)
    d_refresh: float = 0.0     # expected memory-refresh size d = b/alpha
    seed: int = 0
    epsilon: float | None = None
    mu2: float = MU2
    nu2: float = NU2
    beta: float = 0.0
    checkpoint_epochs: float = 1.0
    replicates: int = 1        # convex single-sample variant
    restarts: int = 0          # restart wrapper


@dataclass
class RunTrace:
    """Per-epoch checkpoints plus the method's randomized output iterate."""

    epoch: np.ndarray
    loss: np.ndarray
    grad_norm_sq: np.ndarray
    sgrad_evals: np.ndarray
    wall_ns: np.ndarray
    x_a: np.ndarray
    total_sgrad_evals: int


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    s_draw, s_out = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(s_draw), np.random.default_rng(s_out)


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed).spawn(index + 1)[index].generate_state(1)[0])


class _Reservoir:
    """Uniform pick over a stream of iterates in O(1) memory."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.count = 0
        self.value: np.ndarray | None = None

    def offer(self, x: np.ndarray) -> None:
        self.count += 1
        if self.rng.random() < 1.0 / self.count:
            self.value = x.copy()

    def pick(self) -> np.ndarray:
        if self.value is None:
            raise RuntimeError("no iterates offered")
        return self.value


class _Recorder:
    """Checkpoints at epoch boundaries; metric evaluations are diagnostic and
    never counted as stochastic gradient work."""

    def __init__(self, problem: Problem, checkpoint_epochs: float = 1.0):
        self.problem = problem
        self.n = problem.dataset.n
        self.stride = max(1, int(round(checkpoint_epochs * self.n)))
        self.rows: list[tuple[float, float, float, int, int]] = []
        self.t0 = time.perf_counter_ns()
        self.next_at = 0

    def maybe(self, evals: int, x: np.ndarray) -> None:
        if evals >= self.next_at:
            self.record(evals, x)

    def record(self, evals: int, x: np.ndarray) -> None:
        if self.rows and evals == self.rows[-1][3]:
            return
        f = loss_value(self.problem, x)
        g = full_gradient(self.problem, x)
        gnorm = float(g @ g)
        if not (math.isfinite(f) and math.isfinite(gnorm)) or abs(f) > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"objective diverged at {evals} evaluations",
                self.trace(np.full(x.shape, np.nan), evals),
            )
        self.problem.note_value(f)
        self.rows.append(
            (evals / self.n, f, gnorm, evals, time.perf_counter_ns() - self.t0)
        )
        self.next_at = (evals // self.stride + 1) * self.stride

    def guard(self, x: np.ndarray, evals: int) -> None:
        m = float(np.max(np.abs(x))) if x.size else 0.0
        if not math.isfinite(m) or m > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"iterate diverged at {evals} evaluations",
                self.trace(np.full(x.shape, np.nan), evals),
            )

    def trace(self, x_a: np.ndarray, evals: int) -> RunTrace:
        rows = self.rows or [(0.0, math.nan, math.nan, 0, 0)]
        cols = list(zip(*rows))
        return RunTrace(
            epoch=np.array(cols[0]),
            loss=np.array(cols[1]),
            grad_norm_sq=np.array(cols[2]),
            sgrad_evals=np.array(cols[3], dtype=np.int64),
            wall_ns=np.array(cols[4], dtype=np.int64),
            x_a=np.asarray(x_a, dtype=float),
            total_sgrad_evals=evals,
        )


# ---------------------------------------------------------------------------
# gradient estimators (pure functions of the current state, used both by the
# runners and by the enumeration-based verification suite)


@dataclass
class SvrgSnapshot:
    """Anchor state: anchor point, cached per-row loss slopes there, and the
    full gradient; lets an inner step reuse the anchor pass for free."""

    x: np.ndarray
    slopes: np.ndarray
    g: np.ndarray


def _slopes_at(problem: Problem, x: np.ndarray) -> np.ndarray:
    ds = problem.dataset
    out = np.empty(ds.n)
    for i in range(ds.n):
        idx, val = ds.rows[i]
        out[i] = _scalar_slope(problem.loss, float(val @ x[idx]), float(ds.labels[i]))
    return out


def take_snapshot(problem: Problem, x: np.ndarray) -> SvrgSnapshot:
    return SvrgSnapshot(
        x=x.copy(), slopes=_slopes_at(problem, x), g=full_gradient(problem, x)
    )


def svrg_direction(
    problem: Problem, p: np.ndarray, x: np.ndarray, snap: SvrgSnapshot, subset
) -> np.ndarray:
    """sum_{i in S} (grad f_i(x) - grad f_i(anchor)) / (n p_i) + g."""
    ds = problem.dataset
    n = ds.n
    acc = np.zeros(ds.d)
    wsum = 0.0
    for i in subset:
        idx, val = ds.rows[int(i)]
        slope = _scalar_slope(problem.loss, float(val @ x[idx]), float(ds.labels[i]))
        w = 1.0 / (n * p[i])
        acc[idx] += w * (slope - snap.slopes[i]) * val
        wsum += w
    v = acc + snap.g
    if problem.mu:
        v += problem.mu * wsum * (x - snap.x)
    return v


@dataclass
class SagaMemory:
    """Anchor state held as per-component scalars.

    ``z`` and ``slopes`` hold a_i . anchor_i and the loss slope there, which
    reconstruct the anchor gradients of linear-composite losses exactly;
    ``anchors`` keeps the full anchor vectors only when the loss carries a
    dense mu*x term (the scalars are not sufficient for it).  ``g`` is the
    running average of the anchor gradients, re-synced every n refreshes.
    """

    z: np.ndarray
    slopes: np.ndarray
    g: np.ndarray
    anchors: np.ndarray | None = None


def init_saga_memory(problem: Problem, x: np.ndarray) -> SagaMemory:
    ds = problem.dataset
    z = np.empty(ds.n)
    for i in range(ds.n):
        idx, val = ds.rows[i]
        z[i] = float(val @ x[idx])
    return SagaMemory(
        z=z,
        slopes=_slopes_at(problem, x),
        g=full_gradient(problem, x),
        anchors=np.tile(x, (ds.n, 1)) if problem.mu else None,
    )


def saga_direction(
    problem: Problem, p: np.ndarray, x: np.ndarray, mem: SagaMemory, subset
) -> np.ndarray:
    """sum_{i in S} (grad f_i(x) - grad f_i(anchor_i)) / (n p_i) + g."""
    ds = problem.dataset
    n = ds.n
    acc = np.zeros(ds.d)
    wsum = 0.0
    for i in subset:
        i = int(i)
        idx, val = ds.rows[i]
        slope = _scalar_slope(problem.loss, float(val @ x[idx]), float(ds.labels[i]))
        w = 1.0 / (n * p[i])
        acc[idx] += w * (slope - mem.slopes[i]) * val
        wsum += w
        if problem.mu:
            acc += problem.mu * w * (x - mem.anchors[i])
    return acc + mem.g


def saga_refresh(problem: Problem, mem: SagaMemory, x: np.ndarray, refresh) -> None:
    """Move anchors j in ``refresh`` to x and update the running average."""
    ds = problem.dataset
    n = ds.n
    for j in refresh:
        j = int(j)
        idx, val = ds.rows[j]
        z_new = float(val @ x[idx])
        slope_new = _scalar_slope(problem.loss, z_new, float(ds.labels[j]))
        mem.g[idx] += (slope_new - mem.slopes[j]) * val / n
        if problem.mu:
            mem.g += problem.mu * (x - mem.anchors[j]) / n
            mem.anchors[j] = x
        mem.z[j] = z_new
        mem.slopes[j] = slope_new


def saga_recompute_average(problem: Problem, mem: SagaMemory) -> np.ndarray:
    """Average of the anchor gradients from scratch (Kahan, index-ascending)."""
    ds = problem.dataset
    s = np.zeros(ds.d)
    c = np.zeros(ds.d)
    for j in range(ds.n):
        idx, val = ds.rows[j]
        g = np.zeros(ds.d)
        g[idx] = mem.slopes[j] * val
        if problem.mu:
            g += problem.mu * mem.anchors[j]
        yc = g - c
        t = s + yc
        c = (t - s) - yc
        s = t
    return s / ds.n


def sarah_increment(
    problem: Problem, p: np.ndarray, x: np.ndarray, x_prev: np.ndarray, subset
) -> np.ndarray:
    """sum_{i in S} (grad f_i(x) - grad f_i(x_prev)) / (n p_i)."""
    ds = problem.dataset
    n = ds.n
    acc = np.zeros(ds.d)
    wsum = 0.0
    for i in subset:
        i = int(i)
        idx, val = ds.rows[i]
        xi = x[idx]
        xp = x_prev[idx]
        y = float(ds.labels[i])
        slope = _scalar_slope(problem.loss, float(val @ xi), y)
        slope_prev = _scalar_slope(problem.loss, float(val @ xp), y)
        w = 1.0 / (n * p[i])
        acc[idx] += w * (slope - slope_prev) * val
        wsum += w
    if problem.mu:
        acc += problem.mu * wsum * (x - x_prev)
    return acc


# ---------------------------------------------------------------------------
# runners


def _start_iterate(problem: Problem, x0) -> np.ndarray:
    if x0 is None:
        return np.zeros(problem.dataset.d)
    x = np.array(x0, dtype=float)
    if x.shape != (problem.dataset.d,):
        raise ValueError("x0 has the wrong dimension")
    return x


def _check_config(problem: Problem, config: RunConfig, need_m: bool = False) -> None:
    if config.scheme is None or config.scheme.n != problem.dataset.n:
        raise ConfigError("config.scheme must match the problem size")
    if config.eta <= 0.0:
        raise ConfigError("step size must be positive")
    if need_m and config.m < 1:
        raise ConfigError("m must be at least 1")


def run_svrg(problem: Problem, config: RunConfig, x0=None) -> RunTrace:
    """Anchored variance reduction: outer loops of m importance-weighted steps
    around a full-gradient anchor; output drawn uniformly over all iterates."""
    _check_config(problem, config, need_m=True)
    scheme = config.scheme
    n = problem.dataset.n
    rng_draw, rng_out = _streams(config.seed)
    x = _start_iterate(problem, x0)
    rec = _Recorder(problem, config.checkpoint_epochs)
    res = _Reservoir(rng_out)
    rec.record(0, x)
    res.offer(x)
    p = scheme.p
    evals = 0
    for _ in range(config.outer):
        snap = take_snapshot(problem, x)
        evals += n
        rec.maybe(evals, x)
        for _ in range(config.m):
            subset = draw(scheme, rng_draw)
            v = svrg_direction(problem, p, x, snap, subset)
            x = x - config.eta * v
            evals += subset.size
            res.offer(x)
            rec.guard(x, evals)
            rec.maybe(evals, x)
    rec.record(evals, x)
    return rec.trace(res.pick(), evals)


def run_saga(problem: Problem, config: RunConfig, x0=None) -> RunTrace:
    """Memory-based variance reduction with importance-weighted minibatches
    and an independently refreshed anchor table."""
    _check_config(problem, config)
    scheme = config.scheme
    n = problem.dataset.n
    if not 0.0 < config.d_refresh <= n:
        raise ConfigError(f"d_refresh must lie in (0, {n}]")
    rng_draw, rng_out = _streams(config.seed)
    x = _start_iterate(problem, x0)
    rec = _Recorder(problem, config.checkpoint_epochs)
    res = _Reservoir(rng_out)
    rec.record(0, x)
    res.offer(x)
    mem = init_saga_memory(problem, x)
    evals = n
    rec.maybe(evals, x)
    p = scheme.p
    refresh_prob = min(1.0, config.d_refresh / n)
    for t in range(config.steps):
        subset = draw(scheme, rng_draw)
        refresh = np.flatnonzero(rng_draw.random(n) < refresh_prob)
        v = saga_direction(problem, p, x, mem, subset)
        x_prev = x
        x = x - config.eta * v
        saga_refresh(problem, mem, x_prev, refresh)  # anchors move to the pre-step iterate
        evals += subset.size + refresh.size
        if (t + 1) % n == 0:
            mem.g = saga_recompute_average(problem, mem)
        res.offer(x)
        rec.guard(x, evals)
        rec.maybe(evals, x)
    rec.record(evals, x)
    return rec.trace(res.pick(), evals)


def run_sarah(problem: Problem, config: RunConfig, x0=None) -> RunTrace:
    """Recursive (biased) variance reduction; each outer loop restarts from a
    uniformly chosen iterate of the previous one, and the output is the last
    restart point."""
    _check_config(problem, config, need_m=True)
    scheme = config.scheme
    n = problem.dataset.n
    rng_draw, rng_out = _streams(config.seed)
    x = _start_iterate(problem, x0)
    rec = _Recorder(problem, config.checkpoint_epochs)
    rec.record(0, x)
    p = scheme.p
    evals = 0
    for _ in range(config.outer):
        inner = _Reservoir(rng_out)
        inner.offer(x)
        v = full_gradient(problem, x)
        evals += n
        x_prev = x
        x = x - config.eta * v
        inner.offer(x)
        rec.guard(x, evals)
        rec.maybe(evals, x)
        for _ in range(1, config.m):
            subset = draw(scheme, rng_draw)
            v = v + sarah_increment(problem, p, x, x_prev, subset)
            x_prev = x
            x = x - config.eta * v
            evals += 2 * subset.size
            inner.offer(x)
            rec.guard(x, evals)
            rec.maybe(evals, x)
        x = inner.pick()
    rec.record(evals, x)
    return rec.trace(x, evals)


def _sarah_convex_once(
    problem: Problem,
    eta: float,
    m: int,
    p_cat: np.ndarray,
    rng: np.random.Generator,
    x0: np.ndarray,
    rec: _Recorder | None,
) -> tuple[np.ndarray, np.ndarray, int]:
    n = problem.dataset.n
    x = x0.copy()
    if rec is not None:
        rec.record(0, x)
    v = full_gradient(problem, x)
    evals = n
    vnorms = np.empty(m)
    vnorms[0] = float(v @ v)
    x_prev = x
    x = x - eta * v
    if rec is not None:
        rec.guard(x, evals)
        rec.maybe(evals, x)
    for t in range(1, m):
        i = int(rng.choice(n, p=p_cat))
        v = v + sarah_increment(problem, p_cat, x, x_prev, [i])
        vnorms[t] = float(v @ v)
        x_prev = x
        x = x - eta * v
        evals += 2
        if rec is not None:
            rec.guard(x, evals)
            rec.maybe(evals, x)
    if rec is not None:
        rec.record(evals, x)
    return vnorms, x, evals


def run_sarah_convex(
    problem: Problem, config: RunConfig, x0=None
) -> tuple[RunTrace, np.ndarray]:
    """Single-sample recursive variant with p_i proportional to L_i.

    Runs ``config.replicates`` independent single-outer-loop trajectories and
    returns the trace of the last one together with the replicate average of
    ||v_t||^2 per step (the quantity whose geometric decay the convex theory
    bounds).
    """
    if config.eta >= 2.0 / problem.Lbar:
        raise ConfigError(
            f"eta = {config.eta:g} violates eta < 2/Lbar = {2.0 / problem.Lbar:g}"
        )
    if config.m < 1:
        raise ConfigError("m must be at least 1")
    x_start = _start_iterate(problem, x0)
    p_cat = problem.L / problem.L.sum()
    reps = max(1, config.replicates)
    children = np.random.SeedSequence(config.seed).spawn(reps)
    vnorms = np.empty((reps, config.m))
    trace = None
    for r in range(reps):
        rng = np.random.default_rng(children[r])
        rec = _Recorder(problem, config.checkpoint_epochs) if r == reps - 1 else None
        vnorms[r], x_final, evals = _sarah_convex_once(
            problem, config.eta, config.m, p_cat, rng, x_start, rec
        )
        if rec is not None:
            trace = rec.trace(x_final, evals)
    return trace, vnorms.mean(axis=0)


def run_gd_wrapper(
    problem: Problem, inner: Method | str, tau: float, config: RunConfig, x0=None
) -> tuple[RunTrace, np.ndarray]:
    """Restart wrapper for gradient-dominated objectives.

    Runs the inner method for its theory-mandated budget, restarts from its
    randomized output, and records per-restart objective gaps against the
    best value seen on this problem.  ``tau`` is the gradient-domination
    constant; it parameterizes the guarantee, not the schedule.
    """
    if tau <= 0.0:
        raise ConfigError("tau must be positive")
    inner = Method(inner) if not isinstance(inner, Method) else inner
    if inner not in (Method.SVRG, Method.SAGA, Method.SARAH):
        raise ConfigError(f"unsupported inner method: {inner}")
    x = _start_iterate(problem, x0)
    scheme = config.scheme
    if scheme is None or scheme.n != problem.dataset.n:
        raise ConfigError("config.scheme must match the problem size")
    n = problem.dataset.n
    t0 = time.perf_counter_ns()
    evals = 0
    rows = []
    gaps = []

    def note(xk):
        f = loss_value(problem, xk)
        problem.note_value(f)
        g = full_gradient(problem, xk)
        rows.append(
            (evals / n, f, float(g @ g), evals, time.perf_counter_ns() - t0)
        )
        best = problem.best_f_seen if math.isfinite(problem.best_f_seen) else 0.0
        gaps.append(f - best)

    note(x)
    for k in range(config.restarts):
        seed_k = _child_seed(config.seed, k)
        inner_cfg = _wrapper_inner_config(problem, inner, scheme, seed_k, config)
        if inner is Method.SVRG:
            t = run_svrg(problem, inner_cfg, x0=x)
        elif inner is Method.SAGA:
            t = run_saga(problem, inner_cfg, x0=x)
        else:
            t = run_sarah(problem, inner_cfg, x0=x)
        x = t.x_a
        evals += t.total_sgrad_evals
        note(x)
    cols = list(zip(*rows))
    trace = RunTrace(
        epoch=np.array(cols[0]),
        loss=np.array(cols[1]),
        grad_norm_sq=np.array(cols[2]),
        sgrad_evals=np.array(cols[3], dtype=np.int64),
        wall_ns=np.array(cols[4], dtype=np.int64),
        x_a=x,
        total_sgrad_evals=evals,
    )
    return trace, np.array(gaps)


def _wrapper_inner_config(
    problem: Problem,
    inner: Method,
    scheme: SamplingScheme,
    seed: int,
    outer_cfg: RunConfig,
) -> RunConfig:
    n = problem.dataset.n
    cc = compute_alpha(problem.L, scheme)
    alpha, Lbar, b = cc.alpha, cc.Lbar, scheme.b
    if alpha <= 0.0:
        raise ConfigError("full-batch sampling: the restart schedule is undefined")
    if inner is Method.SVRG:
        steps = max(1, math.ceil(alpha * n ** (2.0 / 3.0) / (b * NU2)))
        cfg = derive_svrg_config(problem, scheme, epochs=1.0, seed=seed)
        cfg.outer = max(1, math.ceil(steps / cfg.m))
        cfg.checkpoint_epochs = outer_cfg.checkpoint_epochs
        return cfg
    if inner is Method.SAGA:
        cfg = derive_saga_config(problem, scheme, epochs=1.0, seed=seed)
        cfg.steps = max(1, math.ceil(alpha * n ** (2.0 / 3.0) / (b * NU3)))
        cfg.checkpoint_epochs = outer_cfg.checkpoint_epochs
        return cfg
    # recursive method: solve m + 1 = 2 / eta(m) by fixed-point iteration,
    # with eta(m) the largest admissible step for an m-step inner loop
    m = 1.0
    for _ in range(200):
        m_next = Lbar * (1.0 + math.sqrt(1.0 + 4.0 * alpha * m / b)) - 1.0
        if abs(m_next - m) <= 1e-12 * max(1.0, abs(m)):
            m = m_next
            break
        m = m_next
    m_int = max(1, round(m))
    cfg = derive_sarah_config(problem, scheme, m=m_int, epochs=1.0, seed=seed)
    cfg.outer = 1
    cfg.checkpoint_epochs = outer_cfg.checkpoint_epochs
    return cfg


# ---------------------------------------------------------------------------
# theorem-driven configuration and cost prediction


def gap_estimate(problem: Problem, x0=None) -> float:
    """f(x0) minus the best objective value seen so far (0 if none; both
    supported losses are nonnegative, so 0 is a valid lower bound)."""
    x = _start_iterate(problem, x0)
    f0 = loss_value(problem, x)
    best = problem.best_f_seen if math.isfinite(problem.best_f_seen) else 0.0
    return max(f0 - min(best, f0), 1e-30)


def _budget_outer(total_evals: float, per_outer: float) -> int:
    return max(1, int(total_evals // per_outer))


def derive_svrg_config(
    problem: Problem,
    scheme: SamplingScheme,
    epsilon: float | None = None,
    epochs: float | None = None,
    seed: int = 0,
    m: int | None = None,
    checkpoint_epochs: float = 1.0,
) -> RunConfig:
    """Theorem step size eta = mu2 b / (alpha Lbar n^(2/3)) and inner length
    m = floor(n alpha / (3 b mu2)); the outer count comes from an explicit
    epochs budget or from the eps target via predict_complexity."""
    n = problem.dataset.n
    cc = compute_alpha(problem.L, scheme)
    alpha, Lbar, b = cc.alpha, cc.Lbar, scheme.b
    if alpha <= 0.0:
        raise ConfigError(
            "sampling has zero variance constant (full batch); "
            "the theorem step size is undefined"
        )
    bound = alpha * n ** (2.0 / 3.0)
    if b > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"minibatch size b = {b:g} violates the precondition "
            f"b <= alpha n^(2/3) = {bound:g}"
        )
    eta = MU2 * b / (alpha * Lbar * n ** (2.0 / 3.0))
    if m is None:
        m = math.floor(n * alpha / (3.0 * b * MU2))
        if m < 1:
            warnings.warn("theorem inner length floored to 0; clipping m to 1")
            m = 1
    per_outer = n + m * b
    if epochs is not None:
        outer = _budget_outer(epochs * n, per_outer)
    elif epsilon is not None:
        total = predict_complexity(
            Method.SVRG, n, b, alpha, Lbar, gap_estimate(problem), epsilon
        )
        outer = max(1, math.ceil(total / per_outer))
    else:
        raise ConfigError("provide an epochs budget or a target epsilon")
    return RunConfig(
        method=Method.SVRG,
        scheme=scheme,
        eta=eta,
        m=m,
        outer=outer,
        seed=seed,
        epsilon=epsilon,
        beta=Lbar / n ** (1.0 / 3.0),
        checkpoint_epochs=checkpoint_epochs,
    )


def derive_saga_config(
    problem: Problem,
    scheme: SamplingScheme,
    epsilon: float | None = None,
    epochs: float | None = None,
    seed: int = 0,
    checkpoint_epochs: float = 1.0,
) -> RunConfig:
    """Step size eta = b / (3 alpha Lbar n^(2/3)) and refresh size d = b/alpha,
    d clipped into (0, n]."""
    n = problem.dataset.n
    cc = compute_alpha(problem.L, scheme)
    alpha, Lbar, b = cc.alpha, cc.Lbar, scheme.b
    if alpha <= 0.0:
        raise ConfigError(
            "sampling has zero variance constant (full batch); "
            "the theorem step size is undefined"
        )
    bound = alpha * n ** (2.0 / 3.0)
    if b > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"minibatch size b = {b:g} violates the precondition "
            f"b <= alpha n^(2/3) = {bound:g}"
        )
    eta = b / (3.0 * alpha * Lbar * n ** (2.0 / 3.0))
    d_refresh = min(b / alpha, float(n))
    per_step = b + d_refresh
    if epochs is not None:
        steps = max(1, int((epochs * n - n) // per_step))
    elif epsilon is not None:
        total = predict_complexity(
            Method.SAGA, n, b, alpha, Lbar, gap_estimate(problem), epsilon
        )
        steps = max(1, math.ceil((total - n) / per_step))
    else:
        raise ConfigError("provide an epochs budget or a target epsilon")
    return RunConfig(
        method=Method.SAGA,
        scheme=scheme,
        eta=eta,
        steps=steps,
        d_refresh=d_refresh,
        seed=seed,
        epsilon=epsilon,
        mu2=MU3,
        nu2=NU3,
        beta=Lbar / n ** (1.0 / 3.0),
        checkpoint_epochs=checkpoint_epochs,
    )


def derive_sarah_config(
    problem: Problem,
    scheme: SamplingScheme,
    epsilon: float | None = None,
    epochs: float | None = None,
    seed: int = 0,
    m: int | None = None,
    checkpoint_epochs: float = 1.0,
) -> RunConfig:
    """Largest admissible step eta = 2 / (Lbar (sqrt(1 + 4 alpha m / b) + 1));
    the inner length defaults to ceil(n/b) as in the reference experiments."""
    n = problem.dataset.n
    cc = compute_alpha(problem.L, scheme)
    alpha, Lbar, b = cc.alpha, cc.Lbar, scheme.b
    if m is None:
        m = math.ceil(n / b)
    if m < 1:
        raise ConfigError("m must be at least 1")
    eta = 2.0 / (Lbar * (math.sqrt(1.0 + 4.0 * alpha * m / b) + 1.0))
    per_outer = n + 2.0 * b * (m - 1)
    if epochs is not None:
        outer = _budget_outer(epochs * n, per_outer)
    elif epsilon is not None:
        total = predict_complexity(
            Method.SARAH, n, b, alpha, Lbar, gap_estimate(problem), epsilon
        )
        outer = max(1, math.ceil(total / per_outer))
    else:
        raise ConfigError("provide an epochs budget or a target epsilon")
    return RunConfig(
        method=Method.SARAH,
        scheme=scheme,
        eta=eta,
        m=m,
        outer=outer,
        seed=seed,
        epsilon=epsilon,
        checkpoint_epochs=checkpoint_epochs,
    )


def derive_sarah_convex_config(
    problem: Problem,
    m: int | None = None,
    eta: float | None = None,
    replicates: int = 1,
    seed: int = 0,
    checkpoint_epochs: float = 1.0,
) -> RunConfig:
    """Single-sample convex variant: eta defaults to the optimal strongly
    convex step 2/(mu + Lbar) (1/Lbar when mu = 0)."""
    if eta is None:
        eta = 2.0 / (problem.mu + problem.Lbar) if problem.mu > 0 else 1.0 / problem.Lbar
    if eta >= 2.0 / problem.Lbar:
        raise ConfigError(
            f"eta = {eta:g} violates eta < 2/Lbar = {2.0 / problem.Lbar:g}"
        )
    if m is None:
        m = problem.dataset.n
    return RunConfig(
        method=Method.SARAH_CONVEX,
        scheme=None,
        eta=eta,
        m=m,
        replicates=replicates,
        seed=seed,
        checkpoint_epochs=checkpoint_epochs,
    )


def predict_complexity(
    method: Method | str,
    n: int,
    b: float,
    alpha: float,
    Lbar: float,
    gap: float,
    epsilon: float,
) -> float:
    """Closed-form stochastic-gradient-evaluation cost to reach the target
    E||grad f||^2 <= epsilon."""
    if min(n, b, Lbar, gap, epsilon) <= 0 or alpha < 0:
        raise ValueError("all predictor inputs must be positive (alpha >= 0)")
    method = Method(method) if not isinstance(method, Method) else method
    n23 = n ** (2.0 / 3.0)
    if method is Method.SVRG:
        return max(
            float(n),
            MU2 * Lbar * n23 * gap * (1.0 + alpha / (3.0 * MU2)) / (epsilon * NU2),
        )
    if method is Method.SAGA:
        return n + Lbar * n23 * gap * (1.0 + alpha) / (epsilon * NU3)
    if method is Method.SARAH:
        head = 16.0 * alpha * Lbar**2 * gap**2
        root = math.sqrt(head * head + 16.0 * epsilon**2 * Lbar**2 * gap**2 * b**2)
        return n + (head + root) / (2.0 * epsilon**2)
    raise ValueError(f"no complexity formula for method {method}")
