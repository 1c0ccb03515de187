"""Label prediction from a fitted state, scoring, and the relational-vote
baseline."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class Prediction:
    node: int
    predicted_class: int
    score_vector: np.ndarray
    fallback: bool = False


@dataclass
class MetricReport:
    macro_f1: float
    accuracy: float
    per_class_f1: np.ndarray
    confusion: np.ndarray


def _confusion(true, pred, class_count):
    out = np.zeros((class_count, class_count), dtype=np.int64)
    for t, p in zip(true, pred):
        out[t, p] += 1
    return out


def _per_class_f1(confusion):
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.zeros(confusion.shape[0])
    nz = denom > 0
    f1[nz] = 2 * tp[nz] / denom[nz]
    return f1


def macro_f1(true, pred, class_count):
    """Mean one-vs-rest F1 over all classes; absent classes count as 0."""
    return float(_per_class_f1(_confusion(true, pred, class_count)).mean())


def majority_train_class(train_label):
    """Most frequent train class (lowest index on ties); 0 if no labels."""
    observed = train_label[train_label >= 0]
    if observed.size == 0:
        return 0
    return int(np.argmax(np.bincount(observed)))


def predict(state, network, nodes):
    """Score eta . lambda_bar for each requested node.

    Ties break to the lowest class index.  Nodes with no interactions
    carry no position information and fall back to the majority train
    class with fallback=True.
    """
    lbar = state.lambda_bar()
    majority = majority_train_class(state.train_label)
    C = state.n_classes
    out = []
    for v in nodes:
        v = int(v)
        if not 0 <= v < network.node_count:
            raise ValueError(f"unknown node id {v}")
        if network.incidence[v] == 0:
            out.append(Prediction(v, majority, np.zeros(C), fallback=True))
            continue
        scores = state.eta @ lbar[v]
        out.append(Prediction(v, int(np.argmax(scores)), scores))
    return out


def score(predictions, labels):
    """Macro-F1 / accuracy report over test-mask predictions.

    Every scored node must be in the test mask.  Classes absent from
    both truth and prediction contribute F1 = 0 to the macro average.
    """
    if not predictions:
        raise ValueError("empty prediction list")
    true = []
    pred = []
    for p in predictions:
        if p.node not in labels.test_mask:
            raise ValueError(f"node {p.node} is not in the test mask")
        true.append(labels.labels[p.node])
        pred.append(p.predicted_class)
    confusion = _confusion(true, pred, labels.class_count)
    per_class = _per_class_f1(confusion)
    return MetricReport(
        macro_f1=float(per_class.mean()),
        accuracy=float(np.trace(confusion) / confusion.sum()),
        per_class_f1=per_class,
        confusion=confusion,
    )


def wvrn(network, labels, max_sweeps=100):
    """Weighted-vote relational-neighbour baseline.

    Treats the network as undirected; train nodes are clamped one-hot
    and every other node's class distribution is repeatedly replaced by
    the degree-weighted mean of its neighbours' distributions until the
    largest change drops below 1e-6 or max_sweeps is hit.  Returns
    predictions for all non-train nodes; isolated nodes get the majority
    train class with fallback=True.
    """
    N = network.node_count
    C = labels.class_count
    send = network.interactions[:, 0]
    recv = network.interactions[:, 1]
    rows = np.concatenate([send, recv])
    cols = np.concatenate([recv, send])
    adj = sp.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(N, N)
    )
    degree = np.asarray(adj.sum(axis=1)).ravel()

    train = sorted(labels.train_mask)
    clamped = np.zeros(N, dtype=bool)
    clamped[train] = True
    dist = np.full((N, C), 1.0 / C)
    for v in train:
        dist[v] = 0.0
        dist[v, labels.labels[v]] = 1.0

    active = ~clamped & (degree > 0)
    for _ in range(max_sweeps):
        votes = adj @ dist
        votes[degree > 0] /= degree[degree > 0, None]
        delta = np.max(np.abs(votes[active] - dist[active])) if active.any() else 0.0
        dist[active] = votes[active]
        if delta < 1e-6:
            break

    majority = int(np.argmax(np.bincount([labels.labels[v] for v in train]))) if train else 0
    out = []
    for v in range(N):
        if clamped[v]:
            continue
        if degree[v] == 0:
            out.append(Prediction(v, majority, dist[v].copy(), fallback=True))
        else:
            out.append(Prediction(v, int(np.argmax(dist[v])), dist[v].copy()))
    return out
