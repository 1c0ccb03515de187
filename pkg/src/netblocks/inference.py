"""Variational Bayesian EM for the supervised position model.

The fit alternates a sequential E-step over interaction position-pair
posteriors, closed-form Dirichlet count updates, and conjugate-gradient
ascent on the class weights, monitored by the evidence lower bound.
"""

import numpy as np
from scipy.special import gammaln

from . import classify
from ._kernels import estep_sweep, eta_value_grad, slot_factors
from .model import FitReport, ModelConfig, VariationalState
from .special import digamma

ARMIJO_C1 = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 30


class NumericalFailureError(RuntimeError):
    """Non-finite intermediate during fitting."""

    def __init__(self, message, iteration=None, interaction=None):
        self.iteration = iteration
        self.interaction = interaction
        super().__init__(message)

    def __str__(self):
        where = []
        if self.iteration is not None:
            where.append(f"iteration {self.iteration}")
        if self.interaction is not None:
            where.append(f"interaction {self.interaction}")
        suffix = f" ({', '.join(where)})" if where else ""
        return super().__str__() + suffix


class CacheConsistencyError(RuntimeError):
    """The per-node log-factor cache does not cover the requested node."""


def _inv_incidence(incidence):
    inv = np.zeros(incidence.shape[0])
    nz = incidence > 0
    inv[nz] = 1.0 / incidence[nz]
    return inv


def _train_index(train_label):
    """Compact index (node -> row in the train tables) and the id list."""
    ids = np.flatnonzero(train_label >= 0)
    t_index = np.full(train_label.shape[0], -1, dtype=np.int64)
    t_index[ids] = np.arange(ids.size)
    return t_index, ids


def _eta_tables(eta, inv_n_t):
    """Per-train-node tables of eta[c, k] / n_v: raw, row max, shifted exp."""
    eta_n = eta[None, :, :] * inv_n_t[:, None, None]
    m_eta = eta_n.max(axis=2)
    exp_eta = np.exp(eta_n - m_eta[:, :, None])
    return np.ascontiguousarray(eta_n), np.ascontiguousarray(m_eta), exp_eta


def _train_slots(state, t_index):
    """Interaction slots owned by train nodes: indices, roles, marginals."""
    send = state.interactions[:, 0]
    recv = state.interactions[:, 1]
    is_train = state.train_label >= 0
    idx_s = np.flatnonzero(is_train[send])
    idx_r = np.flatnonzero(is_train[recv])
    slot_i = np.concatenate([idx_s, idx_r])
    slot_role = np.concatenate(
        [np.zeros(idx_s.size, dtype=np.int64), np.ones(idx_r.size, dtype=np.int64)]
    )
    slot_t = np.concatenate([t_index[send[idx_s]], t_index[recv[idx_r]]])
    slot_lam = np.ascontiguousarray(
        np.concatenate([state.lam[idx_s].sum(axis=2), state.lam[idx_r].sum(axis=1)])
    )
    return slot_i, slot_role, slot_t, slot_lam


def _rebuild_cache(state, incidence):
    """Recompute slot_log_factor and log_factor_sum from lam and eta."""
    t_index, train_ids = _train_index(state.train_label)
    if train_ids.size == 0:
        return
    inv_n_t = _inv_incidence(incidence)[train_ids]
    slot_i, slot_role, slot_t, slot_lam = _train_slots(state, t_index)
    _, m_eta, exp_eta = _eta_tables(state.eta, inv_n_t)
    slot_lf, S = slot_factors(m_eta, exp_eta, slot_t, slot_lam)
    state.slot_log_factor[slot_i, slot_role, :] = slot_lf
    state.log_factor_sum[train_ids] = S


def init_state(network, labels, config):
    """Seeded random initialization.

    lam rows are symmetric-Dirichlet(1) draws over the K^2 cells and eta
    is uniform on (-0.1, 0.1).  flat mode derives both count posteriors
    from one M-step over the random lam; comm mode overrides omega with
    the assortative matrix (I/K + alpha on the diagonal, alpha off it).
    """
    config.validate()
    K = config.k
    N = network.node_count
    I = network.interaction_count
    C = labels.class_count

    rng = np.random.default_rng(config.seed)
    lam = rng.dirichlet(np.ones(K * K), size=I).reshape(I, K, K)
    eta = rng.uniform(-0.1, 0.1, size=(C, K))

    state = VariationalState(
        lam=lam,
        zeta=np.zeros((K, N)),
        omega=np.zeros((K, K)),
        eta=eta,
        train_label=labels.train_vector(N),
        log_factor_sum=np.zeros((N, C)),
        slot_log_factor=np.zeros((I, 2, C)),
        interactions=network.interactions,
        incidence=network.incidence,
    )
    m_step_counts(state, network, config)
    if config.init_mode == "comm":
        state.omega = np.full((K, K), config.alpha)
        np.fill_diagonal(state.omega, I / K + config.alpha)
    _rebuild_cache(state, network.incidence)
    return state


def e_step(state, network, labels, config):
    """One in-order sweep of the position-pair posteriors.

    Each lam[i] is set proportional to
    exp(psi(zeta[k1, s_i]) + psi(zeta[k2, r_i]) + psi(omega[k1, k2]))
    with, for every train-labelled endpoint, the additional
    eta[y, k]/n_v - h_k / (h . lam_old) softmax terms; endpoints that are
    unlabelled or held out contribute no eta terms.  The log-factor cache
    entries of both endpoints are refreshed after each update.
    """
    epi = digamma(state.omega)
    ezeta = digamma(state.zeta)
    t_index, train_ids = _train_index(state.train_label)
    inv_n = _inv_incidence(network.incidence)
    if train_ids.size:
        eta_n, m_eta, exp_eta = _eta_tables(state.eta, inv_n[train_ids])
    else:
        C = state.n_classes
        eta_n = np.zeros((0, C, state.n_positions))
        m_eta = np.zeros((0, C))
        exp_eta = np.zeros((0, C, state.n_positions))

    bad = estep_sweep(
        np.ascontiguousarray(network.interactions[:, 0]),
        np.ascontiguousarray(network.interactions[:, 1]),
        state.lam,
        epi,
        ezeta,
        t_index,
        state.train_label,
        eta_n,
        m_eta,
        exp_eta,
        state.log_factor_sum,
        state.slot_log_factor,
    )
    if bad >= 0:
        raise NumericalFailureError("numerical failure in E-step", interaction=int(bad))
    return state


def compute_h(state, interaction, node, config):
    """Softmax-normalizer approximation vector for one interaction slot.

    h_k = sum_c exp(eta[c, k]/n_v + S_vc - s_vci) where s_vci is
    interaction i's own cached log factor for the node (both of its
    factors when the interaction is a self-loop).
    """
    if state.train_label[node] < 0:
        raise CacheConsistencyError(f"node {node} has no cached factors")
    s, r = state.interactions[interaction]
    if node not in (s, r):
        raise ValueError(f"node {node} is not an endpoint of interaction {interaction}")
    inv_n = 1.0 / state.incidence[node]
    rem = np.zeros(state.n_classes)
    if node == s:
        rem += state.slot_log_factor[interaction, 0]
    if node == r:
        rem += state.slot_log_factor[interaction, 1]
    expo = (
        state.eta * inv_n
        + (state.log_factor_sum[node] - rem)[:, None]
    )
    return np.exp(expo).sum(axis=0)


def m_step_counts(state, network, config):
    """Closed-form count updates: zeta <- slot marginals + beta,
    omega <- summed pair posteriors + alpha."""
    beta = config.resolved_beta(state.n_classes)
    K = state.n_positions
    N = network.node_count
    zeta = np.full((N, K), beta)
    np.add.at(zeta, network.interactions[:, 0], state.sender_marginals())
    np.add.at(zeta, network.interactions[:, 1], state.receiver_marginals())
    state.zeta = np.ascontiguousarray(zeta.T)
    state.omega = state.lam.sum(axis=0) + config.alpha
    return state


def optimize_eta(state, network, labels, config):
    """Maximize the class-weight terms of the bound by nonlinear CG.

    Polak-Ribiere+ directions with steepest-ascent restarts and an
    Armijo backtracking line search; stops when the gradient max-norm
    falls below cg_grad_tol or after cg_max_steps accepted steps.  On a
    failed line search the current eta is kept and a warning recorded in
    state.cg_info.  The log-factor cache is rebuilt for the final eta.
    """
    train_ids = np.array(sorted(labels.train_mask), dtype=np.int64)
    train_ids = train_ids[network.incidence[train_ids] > 0]
    if train_ids.size == 0:
        raise ValueError("optimize_eta requires a train node with n_v >= 1")

    t_index = np.full(network.node_count, -1, dtype=np.int64)
    t_index[train_ids] = np.arange(train_ids.size)
    inv_n_t = _inv_incidence(network.incidence)[train_ids]
    y_t = np.array([labels.labels[v] for v in train_ids], dtype=np.int64)

    send = network.interactions[:, 0]
    recv = network.interactions[:, 1]
    member = np.zeros(network.node_count, dtype=bool)
    member[train_ids] = True
    idx_s = np.flatnonzero(member[send])
    idx_r = np.flatnonzero(member[recv])
    slot_i = np.concatenate([idx_s, idx_r])
    slot_role = np.concatenate(
        [np.zeros(idx_s.size, dtype=np.int64), np.ones(idx_r.size, dtype=np.int64)]
    )
    slot_t = np.concatenate([t_index[send[idx_s]], t_index[recv[idx_r]]])
    slot_lam = np.ascontiguousarray(
        np.concatenate([state.lam[idx_s].sum(axis=2), state.lam[idx_r].sum(axis=1)])
    )
    lambar = np.zeros((train_ids.size, state.n_positions))
    np.add.at(lambar, slot_t, slot_lam)
    lambar *= inv_n_t[:, None]

    def evaluate(eta, want_grad):
        _, m_eta, exp_eta = _eta_tables(eta, inv_n_t)
        return eta_value_grad(
            eta, m_eta, exp_eta, slot_t, slot_lam, inv_n_t, y_t, lambar, want_grad
        )

    eta = state.eta.copy()
    f, g = evaluate(eta, True)
    if not np.isfinite(f):
        raise NumericalFailureError("non-finite objective in optimize_eta")
    d = g.copy()
    warning = None
    steps = 0
    for _ in range(config.cg_max_steps):
        if np.max(np.abs(g)) < config.cg_grad_tol:
            break
        dd = float((d * g).sum())
        if dd <= 0.0:
            d = g.copy()
            dd = float((g * g).sum())
            if dd == 0.0:
                break
        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = eta + step * d
            f_trial, _ = evaluate(trial, False)
            if np.isfinite(f_trial) and f_trial >= f + ARMIJO_C1 * step * dd:
                accepted = True
                break
            step *= BACKTRACK_FACTOR
        if not accepted:
            warning = "line search failed; keeping current eta"
            break
        eta = trial
        f_new, g_new = evaluate(eta, True)
        beta_pr = float((g_new * (g_new - g)).sum()) / max(float((g * g).sum()), 1e-300)
        d = g_new + max(0.0, beta_pr) * d
        f, g = f_new, g_new
        steps += 1

    state.eta = eta
    state.cg_info = {
        "steps": steps,
        "objective": float(f),
        "grad_max": float(np.max(np.abs(g))),
        "warning": warning,
    }
    _rebuild_cache(state, network.incidence)
    return state


def _dirichlet_logprior(concentration, expect_log):
    """E_q[log Dir(x | conc)] given E_q[log x] for a symmetric prior."""
    dim = expect_log.size
    return (
        gammaln(dim * concentration)
        - dim * gammaln(concentration)
        + (concentration - 1.0) * expect_log.sum()
    )


def _dirichlet_entropy_term(posterior, expect_log):
    """-E_q[log q] for a Dirichlet q with the given parameter vector."""
    return -(
        gammaln(posterior.sum())
        - gammaln(posterior).sum()
        + ((posterior - 1.0) * expect_log).sum()
    )


def free_energy(state, network, labels, config):
    """Evidence lower bound of the current state.

    Dirichlet prior cross-entropies and entropies for (pi, omega) and
    each (phi_k, zeta_k), the expected position-pair and endpoint
    log-likelihoods under lam, the lam entropies, and for each train
    node the softmax terms eta[y] . lambda_bar - logsumexp_c S_vc.
    """
    alpha = config.alpha
    beta = config.resolved_beta(state.n_classes)

    epi = digamma(state.omega) - digamma(state.omega.sum())
    ephi = digamma(state.zeta) - digamma(state.zeta.sum(axis=1))[:, None]

    pair_counts = state.lam.sum(axis=0)
    value = (pair_counts * epi).sum()

    K, N = state.zeta.shape
    node_counts = np.zeros((N, K))
    np.add.at(node_counts, network.interactions[:, 0], state.sender_marginals())
    np.add.at(node_counts, network.interactions[:, 1], state.receiver_marginals())
    value += (node_counts.T * ephi).sum()

    value += _dirichlet_logprior(alpha, epi.ravel())
    value += _dirichlet_entropy_term(state.omega.ravel(), epi.ravel())
    for k in range(K):
        value += _dirichlet_logprior(beta, ephi[k])
        value += _dirichlet_entropy_term(state.zeta[k], ephi[k])

    lam = state.lam
    value -= np.sum(lam * np.log(lam, out=np.zeros_like(lam), where=lam > 0))

    train_ids = np.flatnonzero(state.train_label >= 0)
    if train_ids.size:
        lbar = state.lambda_bar()[train_ids]
        y = state.train_label[train_ids]
        value += (state.eta[y] * lbar).sum()
        S = state.log_factor_sum[train_ids]
        mx = S.max(axis=1)
        value -= (mx + np.log(np.exp(S - mx[:, None]).sum(axis=1))).sum()

    if not np.isfinite(value):
        raise NumericalFailureError("non-finite free energy")
    return float(value)


def fit(network, labels, config):
    """Full variational EM loop.

    Iterates {e_step; m_step_counts; optimize_eta; free_energy} until the
    relative free-energy change falls below free_energy_rel_tol or
    max_iterations is reached.  With an empty train mask the eta update
    and all eta terms are skipped (unsupervised fit).
    """
    state = init_state(network, labels, config)
    supervised = len(labels.train_mask) > 0
    trace = []
    warnings = []
    converged = False
    f_prev = None
    iterations = 0

    for it in range(1, config.max_iterations + 1):
        iterations = it
        try:
            e_step(state, network, labels, config)
            m_step_counts(state, network, config)
            if supervised:
                optimize_eta(state, network, labels, config)
                if state.cg_info.get("warning"):
                    warnings.append(f"iteration {it}: {state.cg_info['warning']}")
            f = free_energy(state, network, labels, config)
        except NumericalFailureError as err:
            err.iteration = it
            raise
        trace.append(f)
        if f_prev is not None and abs(f - f_prev) <= config.free_energy_rel_tol * abs(f):
            converged = True
            break
        f_prev = f

    train_f1 = float("nan")
    if supervised:
        train_nodes = sorted(labels.train_mask)
        preds = classify.predict(state, network, train_nodes)
        true = [labels.labels[v] for v in train_nodes]
        train_f1 = classify.macro_f1(
            true, [p.predicted_class for p in preds], labels.class_count
        )

    report = FitReport(
        free_energy_trace=trace,
        converged=converged,
        iterations_used=iterations,
        train_macro_f1=train_f1,
        eta_final=state.eta.copy(),
        pi_hat=state.omega / state.omega.sum(),
        phi_hat=state.zeta / state.zeta.sum(axis=1, keepdims=True),
        warnings=warnings,
    )
    return state, report
