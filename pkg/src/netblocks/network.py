"""Directed interaction networks with partial node labels.

A network is stored as an ordered list of (sender, receiver) interactions
rather than an adjacency matrix: duplicate lines are distinct interactions
and their multiplicity carries information.  Node ids are dense integers
assigned in first-appearance order so that seeded runs are reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np


class NetworkFormatError(ValueError):
    """Raised for malformed edge-list or label files."""


@dataclass
class InteractionNetwork:
    """A directed multigraph as an interaction list.

    Attributes
    ----------
    node_count : int
        Number of nodes N (dense ids 0..N-1).
    interactions : (I, 2) int64 array
        Ordered sender/receiver pairs.
    incidence : (N,) int64 array
        n_v = number of interaction endpoints at node v; a self-loop
        contributes 2.  Sums to 2I.
    node_names : list of str
        External name of each dense id.
    """

    node_count: int
    interactions: np.ndarray
    incidence: np.ndarray
    node_names: list
    name_to_id: dict = field(repr=False)

    @property
    def interaction_count(self):
        return self.interactions.shape[0]

    @property
    def senders(self):
        return self.interactions[:, 0]

    @property
    def receivers(self):
        return self.interactions[:, 1]

    def to_edge_list(self, path):
        """Write the interaction list as 'src<TAB>dst' lines (load order)."""
        with open(path, "w", encoding="utf-8") as fh:
            for s, r in self.interactions:
                fh.write(f"{self.node_names[s]}\t{self.node_names[r]}\n")


@dataclass
class LabelSet:
    """Partial node -> class assignment with train/test membership.

    ``labels`` maps dense node ids to class indices in [0, class_count).
    ``train_mask`` and ``test_mask`` are disjoint sets of labelled ids;
    nodes in neither mask are known but unused for fitting and scoring.
    """

    class_count: int
    labels: dict
    train_mask: set = field(default_factory=set)
    test_mask: set = field(default_factory=set)
    class_names: list = None

    def __post_init__(self):
        if self.class_names is None:
            self.class_names = [f"c{j}" for j in range(self.class_count)]
        overlap = self.train_mask & self.test_mask
        if overlap:
            raise ValueError(f"train/test masks overlap on {len(overlap)} nodes")
        for v in self.train_mask | self.test_mask:
            if v not in self.labels:
                raise ValueError(f"node {v} is in a mask but has no label")
        for v, c in self.labels.items():
            if not 0 <= c < self.class_count:
                raise ValueError(f"class index {c} out of range for node {v}")

    @property
    def labelled_nodes(self):
        return sorted(self.labels)

    def label_vector(self, node_count):
        """Dense (N,) int64 vector of class indices, -1 where unlabelled."""
        out = np.full(node_count, -1, dtype=np.int64)
        for v, c in self.labels.items():
            out[v] = c
        return out

    def train_vector(self, node_count):
        """Like label_vector but only train-mask nodes carry their class."""
        out = np.full(node_count, -1, dtype=np.int64)
        for v in self.train_mask:
            out[v] = self.labels[v]
        return out

    def with_masks(self, train_mask, test_mask):
        return LabelSet(
            class_count=self.class_count,
            labels=dict(self.labels),
            train_mask=set(train_mask),
            test_mask=set(test_mask),
            class_names=list(self.class_names),
        )


def load_edge_list(path, directed=True):
    """Load a whitespace-separated edge list into an InteractionNetwork.

    Lines starting with '#' and blank lines are skipped.  Duplicate lines
    are kept as distinct interactions.  With ``directed=False`` each edge
    is also inserted reversed, immediately after the forward copy.
    """
    names = []
    name_to_id = {}
    pairs = []

    def intern(name):
        nid = name_to_id.get(name)
        if nid is None:
            nid = len(names)
            name_to_id[name] = nid
            names.append(name)
        return nid

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise NetworkFormatError(
                    f"{path}:{lineno}: expected two node names, got {line!r}"
                )
            a, b = intern(parts[0]), intern(parts[1])
            pairs.append((a, b))
            if not directed:
                pairs.append((b, a))

    if not pairs:
        raise NetworkFormatError(f"{path}: empty network")

    interactions = np.asarray(pairs, dtype=np.int64)
    incidence = np.bincount(interactions.ravel(), minlength=len(names))
    return InteractionNetwork(
        node_count=len(names),
        interactions=interactions,
        incidence=incidence.astype(np.int64),
        node_names=names,
        name_to_id=name_to_id,
    )


def load_labels(path, network):
    """Load 'node<TAB>class' lines against an existing network.

    The class universe is the distinct class names in sorted order.  The
    returned LabelSet has empty train/test masks; use :func:`split`.
    """
    raw = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, 1):
            line = rawline.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise NetworkFormatError(
                    f"{path}:{lineno}: expected 'node class', got {line!r}"
                )
            node, cls = parts
            if node not in network.name_to_id:
                raise NetworkFormatError(
                    f"{path}:{lineno}: unknown node name {node!r}"
                )
            if node in raw and raw[node] != cls:
                raise NetworkFormatError(
                    f"{path}:{lineno}: node {node!r} relabelled "
                    f"{raw[node]!r} -> {cls!r}"
                )
            raw[node] = cls
    if not raw:
        raise NetworkFormatError(f"{path}: no labels")

    class_names = sorted(set(raw.values()))
    class_index = {c: j for j, c in enumerate(class_names)}
    labels = {network.name_to_id[n]: class_index[c] for n, c in raw.items()}
    return LabelSet(
        class_count=len(class_names),
        labels=labels,
        class_names=class_names,
    )


def split(labels, train_fraction, seed):
    """Seeded train/test partition of the labelled nodes.

    Draws floor(train_fraction * |labelled|) train nodes uniformly without
    replacement, then enforces a stratified floor: every class with at
    least two labelled nodes gets at least one train node (repairs are
    deterministic swaps, so the train size is preserved).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    nodes = labels.labelled_nodes
    if not nodes:
        raise ValueError("cannot split an empty label set")

    rng = np.random.default_rng(seed)
    order = [nodes[j] for j in rng.permutation(len(nodes))]
    n_train = math.floor(train_fraction * len(nodes))
    train = order[:n_train]
    test = order[n_train:]

    total = np.zeros(labels.class_count, dtype=np.int64)
    for v in nodes:
        total[labels.labels[v]] += 1
    in_train = np.zeros(labels.class_count, dtype=np.int64)
    for v in train:
        in_train[labels.labels[v]] += 1

    for c in range(labels.class_count):
        if total[c] >= 2 and in_train[c] == 0:
            incoming = next((v for v in test if labels.labels[v] == c), None)
            donor = next(
                (v for v in train if in_train[labels.labels[v]] >= 2), None
            )
            if incoming is None or donor is None:
                continue
            train[train.index(donor)] = incoming
            test[test.index(incoming)] = donor
            in_train[c] += 1
            in_train[labels.labels[donor]] -= 1

    return labels.with_masks(train, test)


def export_split_manifest(labels, network, path):
    """Write the split as a 'node,role' CSV (role in {train, test})."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node,role\n")
        for v in sorted(labels.train_mask | labels.test_mask):
            role = "train" if v in labels.train_mask else "test"
            fh.write(f"{network.node_names[v]},{role}\n")
