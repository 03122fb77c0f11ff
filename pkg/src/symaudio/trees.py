"""Decision tree and forest learning over interval feature tables.

Each internal node tests a decision (relation, atom): the node is true for an
instance when some world reachable from its current world set under the
relation satisfies the atom.  Taking the true branch refines the world set to
the witnesses; the false branch leaves it unchanged.  Propositional trees fix
the relation to Id on the single full interval, modal trees are rooted at the
global relation G.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .intervals import REL_ORDER, RELATIONS, accessible
from .logiset import FEATURE_FNS, FN_INDEX, Atom, instance_from_cube

DEFAULT_RELATIONS = ("L", "Linv", "AO", "AOinv", "DBE", "DBEinv", "G")

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Decision:
    relation: str
    atom: Atom


@dataclass(frozen=True)
class Leaf:
    class_id: int
    histogram: tuple


@dataclass(frozen=True)
class Split:
    decision: Decision
    left: object   # true branch
    right: object  # false branch


@dataclass(frozen=True)
class InstanceState:
    index: int
    worlds: frozenset


@dataclass(frozen=True)
class LearnParams:
    mode: str = "modal"
    min_gain: float = 0.01
    max_leaf_entropy: float = 0.6
    relations: tuple = DEFAULT_RELATIONS
    functions: tuple = FEATURE_FNS
    n_trees: int = 100
    instance_frac: float = 0.7
    attr_frac: float = 0.5
    seed: object = 0

    def __post_init__(self):
        if self.mode not in ("propositional", "modal"):
            raise ValueError(f"bad mode {self.mode!r}")
        if self.min_gain < 0 or self.max_leaf_entropy < 0:
            raise ValueError("min_gain and max_leaf_entropy must be >= 0")
        if not (0.0 < self.instance_frac <= 1.0 and 0.0 < self.attr_frac <= 1.0):
            raise ValueError("sampling fractions must be in (0, 1]")
        for r in self.relations:
            if r not in RELATIONS or r == "Id":
                raise ValueError(f"bad relation {r!r} in params")
        for fn in self.functions:
            if fn not in FEATURE_FNS:
                raise ValueError(f"bad feature function {fn!r} in params")


@dataclass(frozen=True)
class Forest:
    trees: tuple
    attr_subsets: tuple
    seed: object


def entropy(histogram):
    """Shannon entropy in bits of a class count histogram."""
    total = sum(histogram)
    if total <= 0:
        raise ValueError("empty histogram")
    h = 0.0
    for c in histogram:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def initial_worlds(mode, T):
    if mode == "modal":
        return frozenset((x, y) for x in range(T) for y in range(x + 1, T + 1))
    if mode == "propositional":
        return frozenset([(0, T)])
    raise ValueError(f"bad mode {mode!r}")


def _witnesses(decision, inst, worlds):
    rel = decision.relation
    atom = decision.atom
    if rel == "G":
        cand = accessible("G", next(iter(worlds)), inst.T)
    elif rel == "Id":
        cand = sorted(worlds)
    else:
        seen = set()
        for w in worlds:
            seen.update(accessible(rel, w, inst.T))
        cand = sorted(seen)
    return frozenset(v for v in cand if inst.eval_atom(atom, v))


def apply_decision(decision, state, ls):
    """Route one instance: (truth, refined or unchanged state)."""
    inst = ls.instances[state.index]
    sat = _witnesses(decision, inst, state.worlds)
    if sat:
        return True, InstanceState(state.index, sat)
    return False, state


# --- split search -----------------------------------------------------------

def _gain(parent_h, left_hist, right_hist, total, ent_cache):
    def h(hist):
        val = ent_cache.get(hist)
        if val is None:
            val = entropy(hist)
            ent_cache[hist] = val
        return val
    nl = sum(left_hist)
    nr = sum(right_hist)
    return parent_h - (nl * h(left_hist) + nr * h(right_hist)) / total


def _reach_segments(ls, states, rel):
    """Per state, the table columns reachable under rel from its worlds."""
    if rel == "G":
        full = np.arange(len(ls.intervals), dtype=np.int64)
        return [full] * len(states)
    segs = []
    for s in states:
        if rel == "Id":
            segs.append(np.sort(np.array(
                [ls.w_index[w] for w in s.worlds], dtype=np.int64)))
        else:
            parts = [ls.accessible_indices(rel, w) for w in sorted(s.worlds)]
            parts = [p for p in parts if p.size]
            if parts:
                segs.append(np.unique(np.concatenate(parts)))
            else:
                segs.append(np.empty(0, dtype=np.int64))
    return segs


def best_split(ls, states, *, relations, functions, attrs):
    """Exhaustive search over relation x function x attribute x op x threshold.

    Thresholds are the distinct feature values observed at the reachable
    worlds of the node's instances.  Returns (Decision, gain) maximizing
    entropy gain, ties broken by the canonical (relation, attr, fn, op,
    threshold) order; None when no candidate partitions the node.
    """
    m = len(states)
    if m < 2:
        return None
    k = len(ls.classes)
    labels = np.array([ls.instances[s.index].label for s in states])
    parent_hist = tuple(int(c) for c in np.bincount(labels, minlength=k))
    ent_cache = {}
    parent_h = entropy(parent_hist)
    if parent_h == 0.0:
        return None
    onehot = np.zeros((m, k), dtype=np.int64)
    onehot[np.arange(m), labels] = 1
    parent_arr = np.array(parent_hist, dtype=np.int64)
    rows = np.array([s.index for s in states])

    best = None  # (gain, key, Decision)
    attrs = sorted(attrs)
    fns = [fn for fn in FEATURE_FNS if fn in set(functions)]

    for rel in relations:
        segs = _reach_segments(ls, states, rel)
        lens = np.array([s.size for s in segs])
        if not lens.any():
            continue
        flat_rows = np.repeat(rows, lens)
        flat_cols = np.concatenate([s for s in segs if s.size])
        starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
        nonempty = lens > 0
        ne_starts = starts[nonempty]
        for fn in fns:
            fi = FN_INDEX[fn]
            for attr in attrs:
                vals = ls.table[flat_rows, fi, attr, flat_cols]
                mx = np.full(m, -np.inf)
                mn = np.full(m, np.inf)
                mx[nonempty] = np.maximum.reduceat(vals, ne_starts)
                mn[nonempty] = np.minimum.reduceat(vals, ne_starts)
                pool = np.unique(vals)
                for op in ("<=", ">="):
                    if op == "<=":
                        sat = mn[None, :] <= pool[:, None]
                    else:
                        sat = mx[None, :] >= pool[:, None]
                    n_true = sat.sum(axis=1)
                    valid = (n_true > 0) & (n_true < m)
                    if not valid.any():
                        continue
                    left = sat[valid].astype(np.int64) @ onehot
                    thrs = pool[valid]
                    uniq, inverse = np.unique(left, axis=0,
                                              return_inverse=True)
                    gains_u = np.array([
                        _gain(parent_h, tuple(int(c) for c in u),
                              tuple(int(c) for c in parent_arr - u),
                              m, ent_cache)
                        for u in uniq])
                    gains = gains_u[inverse.ravel()]
                    top = gains.max()
                    first = int(np.argmax(gains == top))
                    g = float(gains[first])
                    thr = float(thrs[first])
                    key = (REL_ORDER[rel], attr, fi, op, thr)
                    if best is None or g > best[0] or \
                            (g == best[0] and key < best[1]):
                        dec = Decision(rel, Atom(fn=fn, attr=attr, op=op,
                                                 threshold=thr))
                        best = (g, key, dec)
    if best is None:
        return None
    return best[2], best[0]


# --- tree learning ----------------------------------------------------------

def _node_relations(params, depth):
    if params.mode == "propositional":
        return ("Id",)
    if depth == 0:
        return ("G",)
    rels = ["Id"]
    rels.extend(r for r in params.relations if r != "Id")
    return tuple(rels)


def _leaf(labels, k):
    hist = tuple(int(c) for c in np.bincount(labels, minlength=k))
    return Leaf(class_id=int(np.argmax(hist)), histogram=hist)


def learn_tree(ls, params, indices=None, attrs=None):
    """Grow a tree top-down; leaves stop at low entropy or insufficient gain."""
    if indices is None:
        indices = range(len(ls.instances))
    indices = sorted(indices)
    if not indices:
        raise ValueError("cannot learn from an empty instance set")
    if attrs is None:
        attrs = range(ls.n_attrs)
    attrs = sorted(attrs)
    k = len(ls.classes)
    w0 = initial_worlds(params.mode, ls.T)
    states = [InstanceState(i, w0) for i in indices]

    def grow(states, depth):
        labels = np.array([ls.instances[s.index].label for s in states])
        h = entropy(tuple(int(c) for c in np.bincount(labels, minlength=k)))
        if h <= params.max_leaf_entropy or len(states) < 2:
            return _leaf(labels, k)
        found = best_split(ls, states,
                           relations=_node_relations(params, depth),
                           functions=params.functions, attrs=attrs)
        if found is None:
            return _leaf(labels, k)
        decision, gain = found
        if gain < params.min_gain:
            return _leaf(labels, k)
        left_states, right_states = [], []
        for s in states:
            truth, new_state = apply_decision(decision, s, ls)
            (left_states if truth else right_states).append(new_state)
        if not left_states or not right_states:
            return _leaf(labels, k)
        return Split(decision=decision,
                     left=grow(left_states, depth + 1),
                     right=grow(right_states, depth + 1))

    return grow(states, 0)


def route_tree(tree, inst, mode):
    """Follow decisions from the initial state; returns (leaf, branch path)."""
    worlds = initial_worlds(mode, inst.T)
    node = tree
    path = []
    while isinstance(node, Split):
        sat = _witnesses(node.decision, inst, worlds)
        if sat:
            worlds = sat
            node = node.left
            path.append(True)
        else:
            node = node.right
            path.append(False)
    return node, path


def predict_tree(tree, inst, mode):
    leaf, _ = route_tree(tree, inst, mode)
    return leaf.class_id


# --- forests ----------------------------------------------------------------

def _seed_tuple(seed):
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)

_FOREST_TAG = 23


def learn_forest(ls, params, indices=None):
    """Bagged trees on instance and attribute subsamples, grown to purity."""
    if indices is None:
        indices = range(len(ls.instances))
    indices = sorted(indices)
    m = len(indices)
    n_inst = math.ceil(params.instance_frac * m)
    n_attr = math.ceil(params.attr_frac * ls.n_attrs)
    grow_params = replace(params, min_gain=0.0, max_leaf_entropy=0.0)
    trees = []
    subsets = []
    base = _seed_tuple(params.seed)
    for t in range(params.n_trees):
        rng = np.random.default_rng((*base, _FOREST_TAG, t))
        inst_sample = sorted(rng.choice(indices, size=n_inst, replace=False))
        attr_sample = sorted(rng.choice(ls.n_attrs, size=n_attr,
                                        replace=False))
        trees.append(learn_tree(ls, grow_params, indices=inst_sample,
                                attrs=[int(a) for a in attr_sample]))
        subsets.append(tuple(int(a) for a in attr_sample))
    return Forest(trees=tuple(trees), attr_subsets=tuple(subsets),
                  seed=params.seed)


def predict_forest(forest, inst, mode, n_classes):
    """Plurality vote over the trees; ties go to the lowest class index."""
    votes = np.zeros(n_classes, dtype=np.int64)
    for tree in forest.trees:
        votes[predict_tree(tree, inst, mode)] += 1
    return int(np.argmax(votes))


# --- serialization ----------------------------------------------------------

@dataclass(frozen=True)
class Model:
    kind: str             # "tree" or "forest"
    params: LearnParams
    classes: tuple
    attr_names: tuple
    trees: tuple
    attr_subsets: tuple = ()

    @property
    def tree(self):
        return self.trees[0]


def model_from_tree(tree, params, classes, attr_names):
    return Model(kind="tree", params=params, classes=tuple(classes),
                 attr_names=tuple(attr_names), trees=(tree,))


def model_from_forest(forest, params, classes, attr_names):
    return Model(kind="forest", params=params, classes=tuple(classes),
                 attr_names=tuple(attr_names), trees=forest.trees,
                 attr_subsets=forest.attr_subsets)


def predict_model(model, cube):
    if tuple(cube.names) != model.attr_names:
        raise ValueError("cube attributes do not match the model schema")
    inst = instance_from_cube(cube, model.params.mode)
    if model.kind == "tree":
        return model.params.mode, predict_tree(model.tree, inst,
                                               model.params.mode)
    votes = np.zeros(len(model.classes), dtype=np.int64)
    for tree in model.trees:
        votes[predict_tree(tree, inst, model.params.mode)] += 1
    return model.params.mode, int(np.argmax(votes))


def _node_to_dict(node, classes, attr_names):
    if isinstance(node, Leaf):
        return {"leaf": classes[node.class_id],
                "histogram": list(node.histogram)}
    d = node.decision
    return {
        "decision": {"relation": d.relation, "fn": d.atom.fn,
                     "attr_name": attr_names[d.atom.attr], "op": d.atom.op,
                     "threshold": d.atom.threshold},
        "left": _node_to_dict(node.left, classes, attr_names),
        "right": _node_to_dict(node.right, classes, attr_names),
    }


def _node_from_dict(doc, class_index, name_index):
    if "leaf" in doc:
        return Leaf(class_id=class_index[doc["leaf"]],
                    histogram=tuple(doc["histogram"]))
    d = doc["decision"]
    atom = Atom(fn=d["fn"], attr=name_index[d["attr_name"]], op=d["op"],
                threshold=float(d["threshold"]))
    return Split(decision=Decision(d["relation"], atom),
                 left=_node_from_dict(doc["left"], class_index, name_index),
                 right=_node_from_dict(doc["right"], class_index, name_index))


def model_to_dict(model):
    p = model.params
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind,
        "params": {
            "mode": p.mode, "min_gain": p.min_gain,
            "max_leaf_entropy": p.max_leaf_entropy,
            "relations": list(p.relations), "functions": list(p.functions),
            "n_trees": p.n_trees, "instance_frac": p.instance_frac,
            "attr_frac": p.attr_frac, "seed": list(_seed_tuple(p.seed)),
        },
        "classes": list(model.classes),
        "attr_names": list(model.attr_names),
        "trees": [_node_to_dict(t, model.classes, model.attr_names)
                  for t in model.trees],
        "attr_subsets": [list(s) for s in model.attr_subsets],
    }
    return doc


def model_from_dict(doc):
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError("unsupported model schema version")
    p = doc["params"]
    seed = p["seed"]
    params = LearnParams(mode=p["mode"], min_gain=p["min_gain"],
                         max_leaf_entropy=p["max_leaf_entropy"],
                         relations=tuple(p["relations"]),
                         functions=tuple(p["functions"]),
                         n_trees=p["n_trees"],
                         instance_frac=p["instance_frac"],
                         attr_frac=p["attr_frac"],
                         seed=seed[0] if len(seed) == 1 else tuple(seed))
    classes = tuple(doc["classes"])
    attr_names = tuple(doc["attr_names"])
    class_index = {c: i for i, c in enumerate(classes)}
    name_index = {n: i for i, n in enumerate(attr_names)}
    trees = tuple(_node_from_dict(t, class_index, name_index)
                  for t in doc["trees"])
    return Model(kind=doc["kind"], params=params, classes=classes,
                 attr_names=attr_names, trees=trees,
                 attr_subsets=tuple(tuple(s) for s in doc["attr_subsets"]))


def model_to_json(model):
    return json.dumps(model_to_dict(model), sort_keys=True,
                      separators=(",", ":")) + "\n"


def save_model(model, path):
    data = model_to_json(model).encode("utf-8")
    _atomic_write(path, data)


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_dict(json.loads(fh.read().decode("utf-8")))


def _atomic_write(path, data):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
