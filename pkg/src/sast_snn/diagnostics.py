"""Numerical checks of the stability/smoothness theory: contraction proxy,
input-Lipschitz bound, first-order SAM bound, convergence-floor monitor and
membrane-margin statistics.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .bptt import batch_gradient, loss_only
from .events import LabeledDataset
from .network import NetworkParams, SurrogateConfig, forward, membrane_margins, surrogate_deriv

HIST_RANGE = (-3.0, 3.0)
HIST_WIDTH = 0.05


@dataclass
class ContractionReport:
    b1_hat: float
    m_theta_hat: float
    gamma_hat: float
    contractive: bool
    argmax_layer: int
    argmax_step: int
    argmax_sample: int
    alpha: float

    def as_dict(self):
        return asdict(self)


def contraction_proxy(params: NetworkParams, ds: LabeledDataset, chunk=256) -> ContractionReport:
    """gamma_hat = alpha + max_l ||theta_l||_inf * max |sigma'(u - theta)| over one
    surrogate pass (all layers, steps, neurons, samples)."""
    if len(ds) == 0:
        raise ValueError("contraction proxy needs a non-empty dataset")
    best, loc = -1.0, (0, 0, 0)
    for start in range(0, len(ds), chunk):
        trace = forward(params, ds.frames[start:start + chunk], "surrogate")
        for li, (u, layer) in enumerate(zip(trace.u, params.layers)):
            d = surrogate_deriv(u - layer.theta, params.surrogate)
            flat = int(np.argmax(d))
            if d.flat[flat] > best:
                best = float(d.flat[flat])
                t, b, _ = np.unravel_index(flat, d.shape)
                loc = (li, int(t), start + int(b))
    m_theta = max(float(np.abs(l.theta).max()) for l in params.layers)
    gamma = params.alpha + m_theta * best
    return ContractionReport(best, m_theta, gamma, gamma < 1.0, *loc, params.alpha)


# ---------------------------------------------------------------------------
# input-Lipschitz bound
# ---------------------------------------------------------------------------

def geometric_sum(gamma, n_steps):
    """S_T(gamma) = sum_{j<T} gamma**j, using the limit T at gamma == 1."""
    if abs(1.0 - gamma) < 1e-12:
        return float(n_steps)
    return (1.0 - gamma ** n_steps) / (1.0 - gamma)


def lipschitz_bound(m_out, b1, m_a, gamma, n_steps, n_layers):
    """L_x = M_out * (B1 * M_A * S_T(gamma))**L / sqrt(T)."""
    return m_out * (b1 * m_a * geometric_sum(gamma, n_steps)) ** n_layers / math.sqrt(n_steps)


@dataclass
class TheoryConstants:
    m_a: float
    m_theta: float
    m_out: float
    b1_hat: float
    b1_global: float
    alpha: float
    n_steps: int
    n_layers: int
    r_x: float
    b2: float
    beta_hat: float = float("nan")
    rho: float = 0.0
    eta: float = 1e-3
    k: int = 0
    sigma_noise_sq: float = float("nan")
    sigma_noise_source: str = "unset"
    l_star: float = 0.0

    @property
    def gamma(self):
        return self.alpha + self.m_theta * self.b1_hat

    @property
    def contractive(self):
        return self.gamma < 1.0

    def lipschitz(self):
        return lipschitz_bound(self.m_out, self.b1_hat, self.m_a, self.gamma, self.n_steps, self.n_layers)

    def as_dict(self):
        d = asdict(self)
        d.update(gamma=self.gamma, contractive=self.contractive, lipschitz_bound=self.lipschitz())
        return d


def operator_norms(params: NetworkParams) -> tuple[float, float, float]:
    """(M_A, M_theta, M_out): largest layer spectral norm, max |theta|, ||W_out||_2."""
    m_a = max(float(np.linalg.norm(l.A, 2)) for l in params.layers)
    m_theta = max(float(np.abs(l.theta).max()) for l in params.layers)
    return m_a, m_theta, float(np.linalg.norm(params.w_out, 2))


def max_second_deriv(z, cfg: SurrogateConfig):
    """max |sigma''| over the sampled offsets ``z``."""
    z = np.abs(np.asarray(z, dtype=np.float64)).ravel()
    k = cfg.slope
    kz = k * z
    return float((2.0 * k ** 3 * z / (math.pi * (1.0 + kz * kz) ** 2)).max()) if z.size else 0.0


def measure_constants(params: NetworkParams, ds: LabeledDataset) -> TheoryConstants:
    """Constants measured on one surrogate pass over ``ds``. R_x is the
    largest per-step input norm seen."""
    m_a, m_theta, m_out = operator_norms(params)
    report = contraction_proxy(params, ds)
    offsets = []
    for start in range(0, len(ds), 256):
        tr = forward(params, ds.frames[start:start + 256], "surrogate")
        offsets.append(membrane_margins(tr, params))
    r_x = float(np.linalg.norm(ds.frames, axis=2).max())
    return TheoryConstants(m_a, m_theta, m_out, report.b1_hat, params.surrogate.max_slope,
                           params.alpha, ds.n_steps, len(params.layers), r_x,
                           max_second_deriv(np.concatenate(offsets), params.surrogate))


def interval_slope_max(z1, z2, cfg: SurrogateConfig):
    """Elementwise sup of sigma' on the segment [z1, z2]. sigma' peaks at 0 and
    decays in |z|, so it is k/pi if the segment straddles 0, else sigma' at the
    endpoint nearer to 0."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    near = np.where(z1 * z2 <= 0.0, 0.0, np.minimum(np.abs(z1), np.abs(z2)))
    return surrogate_deriv(near, cfg)


def lipschitz_probe(params: NetworkParams, x, x_pert) -> dict:
    """Measured output-change ratios for input pairs, and the bound computed from
    constants that hold along every pair's segment (mean-value slope sup), so
    the bound is a true upper bound for these pairs."""
    x = np.asarray(x, dtype=np.float64)
    x_pert = np.asarray(x_pert, dtype=np.float64)
    ta = forward(params, x, "surrogate")
    tb = forward(params, x_pert, "surrogate")
    b1 = 0.0
    for ua, ub, layer in zip(ta.u, tb.u, params.layers):
        b1 = max(b1, float(interval_slope_max(ua - layer.theta, ub - layer.theta, params.surrogate).max()))
    m_a, m_theta, m_out = operator_norms(params)
    gamma = params.alpha + m_theta * b1
    n_steps = x.shape[-2]
    bound = lipschitz_bound(m_out, b1, m_a, gamma, n_steps, len(params.layers))
    d_out = np.linalg.norm(ta.logits - tb.logits, axis=1)
    d_in = np.linalg.norm((x - x_pert).reshape(x.shape[0], -1), axis=1)
    ratios = d_out / d_in
    return {"ratios": ratios, "max_ratio": float(ratios.max()), "bound": bound, "b1": b1,
            "gamma": gamma, "contractive": gamma < 1.0, "violations": int(np.sum(ratios > bound))}


# ---------------------------------------------------------------------------
# smoothness and the first-order SAM bound
# ---------------------------------------------------------------------------

def estimate_beta(loss_fn, w, n_dirs=32, h=1e-3, rng=None):
    """max |L(w+hd) - 2L(w) + L(w-hd)| / h**2 over random unit directions d."""
    rng = np.random.default_rng(rng)
    w = np.asarray(w, dtype=np.float64)
    l0 = loss_fn(w)
    best = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(w.shape)
        d /= np.linalg.norm(d)
        best = max(best, abs(loss_fn(w + h * d) - 2.0 * l0 + loss_fn(w - h * d)) / h ** 2)
    return best


def sam_bound_check(loss_fn, grad_fn, w, rho, probes=64, beta=None, rng=None,
                    n_beta_dirs=32, beta_step=1e-3) -> dict:
    """Compare max_{||eps|| <= rho} L(w + eps), probed along the ascent
    direction plus random directions on the rho-sphere, against
    L(w) + rho ||g|| + beta rho**2 / 2."""
    if probes < 1:
        raise ValueError("need at least one probe")
    rng = np.random.default_rng(rng)
    w = np.asarray(w, dtype=np.float64)
    l0 = float(loss_fn(w))
    g = np.asarray(grad_fn(w), dtype=np.float64)
    g_norm = float(np.linalg.norm(g))
    beta_source = "given"
    if beta is None:
        beta = estimate_beta(loss_fn, w, n_beta_dirs, beta_step, rng)
        beta_source = "probed"
    dirs = [g / g_norm if g_norm > 0 else np.zeros_like(w)]
    for _ in range(probes - 1):
        d = rng.standard_normal(w.shape)
        dirs.append(d / np.linalg.norm(d))
    values = [float(loss_fn(w + rho * d)) for d in dirs]
    worst = int(np.argmax(values))
    rhs = l0 + rho * g_norm + 0.5 * beta * rho ** 2
    satisfied = values[worst] <= rhs
    out = {"lhs_max": values[worst], "rhs": rhs, "satisfied": bool(satisfied), "loss": l0,
           "grad_norm": g_norm, "beta": float(beta), "beta_source": beta_source, "rho": rho,
           "probes": probes, "worst_probe": worst}
    if not satisfied:
        out["violating_direction"] = dirs[worst]
    return out


def sam_bound_check_network(params: NetworkParams, frames, labels, rho, probes=64, seed=0) -> dict:
    def loss_fn(v):
        return loss_only(params.with_vector(v), frames, labels)

    def grad_fn(v):
        return batch_gradient(params.with_vector(v), frames, labels)[1].to_vector()

    return sam_bound_check(loss_fn, grad_fn, params.to_vector(), rho, probes, rng=seed)


# ---------------------------------------------------------------------------
# convergence monitor
# ---------------------------------------------------------------------------

def convergence_rhs(initial_loss, eta, n_iters, beta, rho, sigma_noise_sq, l_star=0.0):
    """4 (L(w0) - L*) / (eta K) + 3 beta^2 rho^2 + 2 eta beta sigma^2."""
    return (4.0 * (initial_loss - l_star) / (eta * n_iters) + 3.0 * beta ** 2 * rho ** 2
            + 2.0 * eta * beta * sigma_noise_sq)


def convergence_monitor(grad_norms, beta, rho, eta, initial_loss, sigma_noise_sq=0.0,
                        sigma_source="assumed", l_star=0.0) -> dict:
    """Observational: running mean of ||g_k||^2 next to the bound's terms."""
    g = np.asarray(grad_norms, dtype=np.float64)
    if g.size == 0:
        raise ValueError("empty gradient-norm record")
    k = g.size
    return {
        "iterations": k,
        "mean_grad_norm_sq": float(np.mean(g ** 2)),
        "running_mean_grad_norm_sq": (np.cumsum(g ** 2) / np.arange(1, k + 1)).tolist(),
        "floor": 3.0 * beta ** 2 * rho ** 2,
        "rhs": convergence_rhs(initial_loss, eta, k, beta, rho, sigma_noise_sq, l_star),
        "beta": beta, "rho": rho, "eta": eta, "initial_loss": initial_loss, "l_star": l_star,
        "sigma_noise_sq": sigma_noise_sq, "sigma_noise_source": sigma_source,
    }


def estimate_gradient_noise(params: NetworkParams, ds: LabeledDataset, batch_size, n_batches=8, seed=0):
    """Mean squared deviation of minibatch gradients from the full-data gradient."""
    full = batch_gradient(params, ds.frames, ds.labels)[1].to_vector()
    rng = np.random.default_rng(seed)
    devs = []
    for _ in range(n_batches):
        idx = rng.choice(len(ds), size=min(batch_size, len(ds)), replace=False)
        g = batch_gradient(params, ds.frames[idx], ds.labels[idx])[1].to_vector()
        devs.append(float(np.sum((g - full) ** 2)))
    return float(np.mean(devs))


# ---------------------------------------------------------------------------
# membrane margins
# ---------------------------------------------------------------------------

def margin_histogram(margins):
    """Mass per 0.05-wide bin over [-3, 3]; out-of-range values clamp to the end bins."""
    edges = np.linspace(HIST_RANGE[0], HIST_RANGE[1], int(round((HIST_RANGE[1] - HIST_RANGE[0]) / HIST_WIDTH)) + 1)
    m = np.clip(np.asarray(margins, dtype=np.float64), HIST_RANGE[0], HIST_RANGE[1])
    counts, _ = np.histogram(m, bins=edges)
    mass = counts / max(m.size, 1)
    return 0.5 * (edges[:-1] + edges[1:]), mass


def margin_statistic(params: NetworkParams, ds: LabeledDataset, window=0.2, mode="hard", chunk=256) -> dict:
    """Fraction of membrane margins (u - theta) with |margin| <= window, plus histogram."""
    if not window > 0:
        raise ValueError("window must be positive")
    margins = np.concatenate([membrane_margins(forward(params, ds.frames[i:i + chunk], mode), params)
                              for i in range(0, len(ds), chunk)])
    centers, mass = margin_histogram(margins)
    return {"fraction": float(np.mean(np.abs(margins) <= window)), "window": window, "mode": mode,
            "count": int(margins.size), "bin_centers": centers, "mass": mass}
