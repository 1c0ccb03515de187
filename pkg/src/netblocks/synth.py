"""Sampling networks and labels from the generative position model.

Used to build oracle fixtures: interactions are drawn i.i.d. from a
position-pair distribution, endpoints from per-position node
distributions, and each touched node's label from a softmax over its
realized position frequencies.
"""

from dataclasses import dataclass

import numpy as np

from .network import InteractionNetwork, LabelSet


@dataclass
class GenerativeParams:
    """Ground-truth parameters for sampling.

    pi is a K x K nonnegative matrix summing to 1 (position-pair
    probabilities), phi has K rows each a distribution over the N nodes,
    eta is the C x K class-weight matrix of the label softmax.
    """

    K: int
    N: int
    I: int
    C: int
    pi: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    seed: int = 0

    def validate(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        phi = np.asarray(self.phi, dtype=np.float64)
        if pi.shape != (self.K, self.K):
            raise ValueError(f"pi must be {self.K}x{self.K}")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
            raise ValueError("pi must be nonnegative and sum to 1")
        if phi.shape != (self.K, self.N):
            raise ValueError(f"phi must be {self.K}x{self.N}")
        if np.any(phi < 0):
            raise ValueError("phi rows must be nonnegative")
        sums = phi.sum(axis=1)
        for k, s in enumerate(sums):
            if s == 0.0:
                raise ValueError(f"phi row {k} is all zero")
            if abs(s - 1.0) > 1e-9:
                raise ValueError(f"phi row {k} sums to {s}, expected 1")
        if np.asarray(self.eta).shape != (self.C, self.K):
            raise ValueError(f"eta must be {self.C}x{self.K}")


def generate(params):
    """Sample (network, labels, truth) from the generative process.

    Returns the interaction network, a LabelSet covering every node with
    at least one interaction endpoint (empty masks), and the (I, 2)
    ground-truth array of sender/receiver position indices.  Nodes never
    reached by an endpoint draw are kept in the network with n_v = 0 and
    receive no label.  Deterministic per params.seed.
    """
    params.validate()
    K, N, I, C = params.K, params.N, params.I, params.C
    pi = np.asarray(params.pi, dtype=np.float64)
    phi = np.asarray(params.phi, dtype=np.float64)
    eta = np.asarray(params.eta, dtype=np.float64)
    rng = np.random.default_rng(params.seed)

    cells = rng.choice(K * K, size=I, p=pi.ravel() / pi.sum())
    z_s = cells // K
    z_r = cells % K

    senders = np.empty(I, dtype=np.int64)
    receivers = np.empty(I, dtype=np.int64)
    for k in range(K):
        row = phi[k] / phi[k].sum()
        idx = np.flatnonzero(z_s == k)
        if idx.size:
            senders[idx] = rng.choice(N, size=idx.size, p=row)
        idx = np.flatnonzero(z_r == k)
        if idx.size:
            receivers[idx] = rng.choice(N, size=idx.size, p=row)

    interactions = np.stack([senders, receivers], axis=1)
    incidence = np.bincount(interactions.ravel(), minlength=N).astype(np.int64)

    # Realized position frequencies per node, averaged over its endpoints.
    zbar = np.zeros((N, K), dtype=np.float64)
    np.add.at(zbar, (senders, z_s), 1.0)
    np.add.at(zbar, (receivers, z_r), 1.0)
    touched = np.flatnonzero(incidence > 0)
    zbar[touched] /= incidence[touched, None]

    logits = zbar[touched] @ eta.T
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(touched.size)
    drawn = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)

    names = [f"n{v}" for v in range(N)]
    net = InteractionNetwork(
        node_count=N,
        interactions=interactions,
        incidence=incidence,
        node_names=names,
        name_to_id={n: v for v, n in enumerate(names)},
    )
    labels = LabelSet(
        class_count=C,
        labels={int(v): int(c) for v, c in zip(touched, drawn)},
    )
    truth = np.stack([z_s, z_r], axis=1)
    return net, labels, truth


def planted_partition(K, N, I, p_in, C, eta_scale, seed=0):
    """Assortative fixture parameters: K equal node blocks.

    pi carries p_in/K on each diagonal cell and spreads 1 - p_in
    uniformly off-diagonal; phi rows are uniform over disjoint blocks
    (N must be divisible by K); eta aligns class c with the positions
    k where k mod C == c (the identity pattern when C == K).
    """
    if not 0.0 < p_in <= 1.0:
        raise ValueError(f"p_in must be in (0, 1], got {p_in}")
    if N % K:
        raise ValueError(f"N={N} not divisible by K={K}")

    if K == 1:
        pi = np.ones((1, 1))
    else:
        pi = np.full((K, K), (1.0 - p_in) / (K * K - K))
        np.fill_diagonal(pi, p_in / K)

    block = N // K
    phi = np.zeros((K, N))
    for k in range(K):
        phi[k, k * block : (k + 1) * block] = 1.0 / block

    align = np.zeros((C, K))
    for k in range(K):
        align[k % C, k] = 1.0
    return GenerativeParams(
        K=K, N=N, I=I, C=C, pi=pi, phi=phi, eta=eta_scale * align, seed=seed
    )


def dump_fixture(net, labels, truth, out_dir):
    """Write edges.tsv / labels.tsv / truth.csv fixture files."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    net.to_edge_list(os.path.join(out_dir, "edges.tsv"))
    with open(os.path.join(out_dir, "labels.tsv"), "w", encoding="utf-8") as fh:
        for v in sorted(labels.labels):
            fh.write(f"{net.node_names[v]}\t{labels.class_names[labels.labels[v]]}\n")
    with open(os.path.join(out_dir, "truth.csv"), "w", encoding="utf-8") as fh:
        fh.write("interaction,z_s,z_r\n")
        for i, (a, b) in enumerate(truth):
            fh.write(f"{i},{a},{b}\n")
