"""Configuration and state containers for the variational fit."""

from dataclasses import dataclass, field

import numpy as np

INIT_MODES = ("flat", "comm")


@dataclass
class ModelConfig:
    """Fit controls.

    k is the maximum number of network positions; alpha and beta are the
    Dirichlet concentrations of the position-pair and position-node
    distributions.  beta=None resolves to 1/C at fit time.
    """

    k: int
    alpha: float = 2.0
    beta: float = None
    init_mode: str = "flat"
    max_iterations: int = 200
    free_energy_rel_tol: float = 1e-6
    cg_max_steps: int = 50
    cg_grad_tol: float = 1e-5
    seed: int = 0

    def validate(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.free_energy_rel_tol > 0:
            raise ValueError("free_energy_rel_tol must be > 0")
        if self.cg_max_steps < 1:
            raise ValueError("cg_max_steps must be >= 1")
        if not self.cg_grad_tol > 0:
            raise ValueError("cg_grad_tol must be > 0")

    def resolved_beta(self, class_count):
        if self.beta is not None:
            return float(self.beta)
        return 1.0 / max(class_count, 1)


@dataclass
class VariationalState:
    """Variational parameters plus the per-node log-factor cache.

    lam[i] is the K x K position-pair posterior of interaction i; zeta
    and omega are the Dirichlet posteriors over nodes-per-position and
    position pairs; eta the C x K class weights.  log_factor_sum[v, c]
    caches S_vc = sum over v's interaction slots of
    log(sum_k lam_slot_k exp(eta_ck / n_v)) and slot_log_factor keeps
    each slot's individual term so one slot can be removed additively.
    Cache rows are meaningful only for nodes with train_label >= 0.
    """

    lam: np.ndarray
    zeta: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    train_label: np.ndarray
    log_factor_sum: np.ndarray
    slot_log_factor: np.ndarray
    interactions: np.ndarray
    incidence: np.ndarray
    cg_info: dict = field(default_factory=dict)

    @property
    def n_positions(self):
        return self.lam.shape[1]

    @property
    def n_classes(self):
        return self.eta.shape[0]

    @property
    def n_nodes(self):
        return self.zeta.shape[1]

    @property
    def n_interactions(self):
        return self.lam.shape[0]

    def sender_marginals(self):
        return self.lam.sum(axis=2)

    def receiver_marginals(self):
        return self.lam.sum(axis=1)

    def lambda_bar(self):
        """(N, K) mean position marginal: each node's slot marginals
        averaged over its n_v interaction endpoints."""
        out = np.zeros((self.n_nodes, self.n_positions))
        np.add.at(out, self.interactions[:, 0], self.sender_marginals())
        np.add.at(out, self.interactions[:, 1], self.receiver_marginals())
        nz = self.incidence > 0
        out[nz] /= self.incidence[nz, None]
        return out

    def copy(self):
        return VariationalState(
            lam=self.lam.copy(),
            zeta=self.zeta.copy(),
            omega=self.omega.copy(),
            eta=self.eta.copy(),
            train_label=self.train_label.copy(),
            log_factor_sum=self.log_factor_sum.copy(),
            slot_log_factor=self.slot_log_factor.copy(),
            interactions=self.interactions,
            incidence=self.incidence,
            cg_info=dict(self.cg_info),
        )


@dataclass
class FitReport:
    """Outcome of one fit: trace, convergence, summaries."""

    free_energy_trace: list
    converged: bool
    iterations_used: int
    train_macro_f1: float
    eta_final: np.ndarray
    pi_hat: np.ndarray
    phi_hat: np.ndarray
    warnings: list = field(default_factory=list)
