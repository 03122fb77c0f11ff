"""Decision construction, split search, tree/forest learning, model files."""
import json
import math

import numpy as np
import pytest

import oracles
from symaudio.audio import FeatureCube
from symaudio.logiset import Atom, build_logiset, instance_from_cube
from symaudio.trees import (DEFAULT_RELATIONS, Decision, Forest, InstanceState,
                            Leaf, LearnParams, Model, Split, apply_decision,
                            best_split, entropy, initial_worlds, learn_forest,
                            learn_tree, load_model, model_from_dict,
                            model_from_forest, model_from_tree, model_to_dict,
                            model_to_json, predict_forest, predict_model,
                            predict_tree, route_tree, save_model, _witnesses)


def _cube(values, names=None):
    arr = np.asarray(values, dtype=np.float64)
    if names is None:
        names = tuple(f"a{i}" for i in range(arr.shape[0]))
    return FeatureCube(names, arr)


def _ls(series_list, labels, mode="modal"):
    cubes = [_cube(s) for s in series_list]
    return build_logiset(cubes, labels, mode=mode)


def _random_ls(rng, m, T, n_attrs, mode="modal"):
    series = [rng.integers(0, 9, size=(n_attrs, T)) / 8.0 for _ in range(m)]
    labels = [int(x) for x in rng.integers(0, 2, size=m)]
    if len(set(labels)) < 2:
        labels[0] = 1 - labels[0]
    return _ls(series, labels, mode=mode)


# --- entropy -----------------------------------------------------------------

def test_entropy_vectors():
    assert entropy((5, 5)) == 1.0
    assert entropy((10, 0)) == 0.0
    assert entropy((25, 25, 25, 25)) == 2.0
    assert entropy((1, 3)) == pytest.approx(0.8112781244591328)
    with pytest.raises(ValueError):
        entropy(())


def test_default_relations():
    assert DEFAULT_RELATIONS == ("L", "Linv", "AO", "AOinv", "DBE",
                                 "DBEinv", "G")


def test_initial_worlds():
    assert initial_worlds("propositional", 5) == frozenset([(0, 5)])
    modal = initial_worlds("modal", 3)
    assert modal == frozenset([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3),
                               (2, 3)])


def test_learn_params_validation():
    with pytest.raises(ValueError):
        LearnParams(mode="sideways")
    with pytest.raises(ValueError):
        LearnParams(relations=("Id", "L"))
    with pytest.raises(ValueError):
        LearnParams(relations=("Later",))
    with pytest.raises(ValueError):
        LearnParams(instance_frac=0.0)
    with pytest.raises(ValueError):
        LearnParams(attr_frac=1.5)
    with pytest.raises(ValueError):
        LearnParams(min_gain=-0.1)
    with pytest.raises(ValueError):
        LearnParams(functions=("max", "sum"))


# --- decision application ----------------------------------------------------

def test_apply_decision_refines_to_all_witnesses():
    ls = _ls([[[1, 2, 3, 4, 5]]], [0])
    state = InstanceState(0, frozenset([(0, 2)]))
    dec = Decision("L", Atom(fn="max", attr=0, op=">=", threshold=5.0))
    truth, new = apply_decision(dec, state, ls)
    assert truth is True
    # every later interval whose max reaches 5 becomes a world
    assert new.worlds == frozenset([(3, 5), (4, 5)])


def test_apply_decision_false_keeps_worlds():
    ls = _ls([[[1, 2, 3, 4, 5]]], [0])
    state = InstanceState(0, frozenset([(0, 2)]))
    dec = Decision("L", Atom(fn="max", attr=0, op=">=", threshold=9.0))
    truth, new = apply_decision(dec, state, ls)
    assert truth is False
    assert new.worlds == frozenset([(0, 2)])


def test_apply_decision_propositional_identity():
    ls = _ls([[[1, 2, 3, 4, 5]]], [0], mode="propositional")
    state = InstanceState(0, frozenset([(0, 5)]))
    dec = Decision("Id", Atom(fn="mean", attr=0, op=">=", threshold=2.0))
    truth, new = apply_decision(dec, state, ls)
    assert truth is True
    assert new.worlds == frozenset([(0, 5)])


def test_apply_decision_global_sweep():
    ls = _ls([[[0, 0, 7, 0]]], [0])
    state = InstanceState(0, frozenset([(0, 1)]))
    dec = Decision("G", Atom(fn="max", attr=0, op=">=", threshold=7.0))
    truth, new = apply_decision(dec, state, ls)
    assert truth is True
    # all intervals covering the spike at point 3
    assert new.worlds == frozenset([(0, 3), (0, 4), (1, 3), (1, 4), (2, 3),
                                    (2, 4)])


def test_apply_decision_id_filters_worlds():
    ls = _ls([[[0, 0, 7, 0]]], [0])
    state = InstanceState(0, frozenset([(0, 1), (0, 3), (2, 3)]))
    dec = Decision("Id", Atom(fn="max", attr=0, op=">=", threshold=7.0))
    truth, new = apply_decision(dec, state, ls)
    assert truth is True
    assert new.worlds == frozenset([(0, 3), (2, 3)])


# --- split search ------------------------------------------------------------

def test_best_split_separable_propositional():
    ls = _ls([[[0, 0, 0]], [[0, 0.1, 0]], [[0.1, 0, 0]],
              [[1, 1, 1]], [[0.9, 1, 1]], [[1, 0.9, 1]]],
             [0, 0, 0, 1, 1, 1], mode="propositional")
    states = [InstanceState(i, initial_worlds("propositional", 3))
              for i in range(6)]
    found = best_split(ls, states, relations=("Id",),
                       functions=("max", "min", "mean"), attrs=(0,))
    assert found is not None
    dec, gain = found
    assert gain == 1.0
    assert dec == Decision("Id", Atom(fn="max", attr=0, op="<=",
                                      threshold=0.1))


def test_best_split_pure_node_is_none():
    ls = _ls([[[0, 1, 0]], [[1, 0, 1]]], [0, 0])
    states = [InstanceState(i, initial_worlds("modal", 3)) for i in range(2)]
    assert best_split(ls, states, relations=("G",),
                      functions=("max",), attrs=(0,)) is None


def test_best_split_identical_instances_is_none():
    ls = _ls([[[0.5, 0.5, 0.5]]] * 4, [0, 1, 0, 1])
    states = [InstanceState(i, initial_worlds("modal", 3)) for i in range(4)]
    assert best_split(ls, states, relations=("G",),
                      functions=("max", "min", "mean", "std"),
                      attrs=(0,)) is None


def test_best_split_matches_naive_oracle():
    rng = np.random.default_rng(9)
    rel_menu = [("G",), ("G", "L"), ("L", "AO", "DBE"),
                ("Id", "G", "Linv", "AOinv", "DBEinv")]
    fn_menu = [("max",), ("max", "min", "mean"), ("median", "std"),
               ("entropy_pairs", "transition_var", "stretch_high",
                "stretch_decr")]
    for trial in range(10):
        ls = _random_ls(rng, m=6, T=3, n_attrs=2)
        states = [InstanceState(i, initial_worlds("modal", 3))
                  for i in range(6)]
        relations = rel_menu[trial % len(rel_menu)]
        functions = fn_menu[trial % len(fn_menu)]
        got = best_split(ls, states, relations=relations,
                         functions=functions, attrs=(0, 1))
        want = oracles.naive_best_split(ls, states, relations, functions,
                                        (0, 1))
        if want is None:
            assert got is None
            continue
        (rel, fn, attr, op, thr), w_gain = want
        dec, gain = got
        assert dec == Decision(rel, Atom(fn=fn, attr=attr, op=op,
                                         threshold=thr))
        assert gain == w_gain


def test_best_split_gain_bounds():
    rng = np.random.default_rng(13)
    for _ in range(10):
        ls = _random_ls(rng, m=8, T=3, n_attrs=2)
        states = [InstanceState(i, initial_worlds("modal", 3))
                  for i in range(8)]
        labels = [ls.instances[s.index].label for s in states]
        parent = oracles.o_entropy([labels.count(c) for c in (0, 1)])
        found = best_split(ls, states, relations=("G", "L", "DBE"),
                           functions=("max", "mean"), attrs=(0, 1))
        if found is not None:
            assert -1e-12 <= found[1] <= parent + 1e-12


# --- tree learning -----------------------------------------------------------

def test_learn_tree_separable():
    ls = _ls([[[0, 0, 0]], [[0, 0.1, 0]], [[0.1, 0, 0]],
              [[1, 1, 1]], [[0.9, 1, 1]], [[1, 0.9, 1]]],
             [0, 0, 0, 1, 1, 1], mode="propositional")
    tree = learn_tree(ls, LearnParams(mode="propositional"))
    assert isinstance(tree, Split)
    assert isinstance(tree.left, Leaf) and isinstance(tree.right, Leaf)
    for inst in ls.instances:
        assert predict_tree(tree, inst, "propositional") == inst.label


def test_learn_tree_single_class_is_leaf():
    ls = build_logiset([_cube([[0, 1, 2]]), _cube([[2, 1, 0]])], [1, 1],
                       classes=(0, 1))
    tree = learn_tree(ls, LearnParams())
    assert tree == Leaf(class_id=1, histogram=(0, 2))


def test_learn_tree_modal_root_is_global():
    rng = np.random.default_rng(21)
    for _ in range(5):
        ls = _random_ls(rng, m=8, T=3, n_attrs=2)
        tree = learn_tree(ls, LearnParams(min_gain=0.0,
                                          max_leaf_entropy=0.0))
        if isinstance(tree, Split):
            assert tree.decision.relation == "G"


def test_full_growth_reaches_purity_when_separable():
    rng = np.random.default_rng(17)
    # distinct series make every pair separable by some interval statistic
    series = [rng.normal(size=(2, 4)) for _ in range(8)]
    labels = [0, 1] * 4
    ls = _ls(series, labels)
    tree = learn_tree(ls, LearnParams(min_gain=0.0, max_leaf_entropy=0.0))
    for inst in ls.instances:
        assert predict_tree(tree, inst, "modal") == inst.label


def test_route_path_replays_decisions():
    rng = np.random.default_rng(19)
    ls = _random_ls(rng, m=10, T=3, n_attrs=2)
    tree = learn_tree(ls, LearnParams(min_gain=0.0, max_leaf_entropy=0.0))
    for inst in ls.instances:
        leaf, path = route_tree(tree, inst, "modal")
        node = tree
        worlds = initial_worlds("modal", inst.T)
        for went_left in path:
            assert isinstance(node, Split)
            sat = _witnesses(node.decision, inst, worlds)
            assert bool(sat) is went_left
            if sat:
                worlds = sat
                node = node.left
            else:
                node = node.right
        assert node == leaf


def test_expressivity_gap_on_burst_position():
    # class 0 bursts early, class 1 late; both h=1 and h=2 bursts appear,
    # so the single global interval carries no class signal at all
    series, labels = [], []
    for h in (1.0, 2.0):
        for _ in range(4):
            series.append([[h, 0, 0, 0, 0]])
            labels.append(0)
            series.append([[0, 0, 0, 0, h]])
            labels.append(1)
    fns = ("max", "min", "mean")
    prop = learn_tree(build_logiset([_cube(s) for s in series], labels,
                                    mode="propositional"),
                      LearnParams(mode="propositional", min_gain=0.0,
                                  max_leaf_entropy=0.0, functions=fns))
    prop_ls = build_logiset([_cube(s) for s in series], labels,
                            mode="propositional")
    prop_acc = np.mean([predict_tree(prop, inst, "propositional") == inst.label
                        for inst in prop_ls.instances])
    assert prop_acc == 0.5

    modal_ls = build_logiset([_cube(s) for s in series], labels)
    modal = learn_tree(modal_ls, LearnParams(min_gain=0.0,
                                             max_leaf_entropy=0.0,
                                             functions=fns))
    modal_acc = np.mean([predict_tree(modal, inst, "modal") == inst.label
                         for inst in modal_ls.instances])
    assert modal_acc == 1.0


# --- forests -----------------------------------------------------------------

def test_forest_structure_and_determinism():
    rng = np.random.default_rng(23)
    ls = _random_ls(rng, m=10, T=3, n_attrs=6)
    params = LearnParams(n_trees=5, seed=42)
    forest = learn_forest(ls, params)
    assert len(forest.trees) == 5
    assert len(forest.attr_subsets) == 5
    for sub in forest.attr_subsets:
        assert len(sub) == 3  # ceil(0.5 * 6)
        assert list(sub) == sorted(sub)
        assert all(0 <= a < 6 for a in sub)
    again = learn_forest(ls, params)
    assert forest == again
    other = learn_forest(ls, LearnParams(n_trees=5, seed=43))
    assert other != forest


def test_forest_of_one_matches_its_tree():
    rng = np.random.default_rng(29)
    ls = _random_ls(rng, m=8, T=3, n_attrs=4)
    forest = learn_forest(ls, LearnParams(n_trees=1, seed=3))
    for inst in ls.instances:
        assert predict_forest(forest, inst, "modal", 2) == \
            predict_tree(forest.trees[0], inst, "modal")


def test_forest_tie_vote_goes_to_lowest_class():
    leaf0 = Leaf(class_id=0, histogram=(1, 0))
    leaf1 = Leaf(class_id=1, histogram=(0, 1))
    forest = Forest(trees=(leaf0, leaf1), attr_subsets=((0,), (0,)), seed=0)
    inst = instance_from_cube(_cube([[1.0, 2.0, 3.0]]), "modal")
    assert predict_forest(forest, inst, "modal", 2) == 0


# --- model files -------------------------------------------------------------

def test_model_round_trip_tree():
    rng = np.random.default_rng(31)
    ls = _random_ls(rng, m=8, T=3, n_attrs=2)
    params = LearnParams()
    tree = learn_tree(ls, params)
    model = model_from_tree(tree, params, ls.classes, ls.attr_names)
    doc = model_to_dict(model)
    back = model_from_dict(json.loads(json.dumps(doc)))
    assert back == model
    assert model_to_json(model) == model_to_json(back)


def test_model_round_trip_forest(tmp_path):
    rng = np.random.default_rng(37)
    ls = _random_ls(rng, m=8, T=3, n_attrs=4)
    params = LearnParams(n_trees=3, seed=(5, 2))
    forest = learn_forest(ls, params)
    model = model_from_forest(forest, params, ls.classes, ls.attr_names)
    path = tmp_path / "model.json"
    save_model(model, path)
    assert load_model(path) == model
    save_model(model, path)
    assert load_model(path) == model


def test_model_json_stable_bytes():
    rng = np.random.default_rng(41)
    ls = _random_ls(rng, m=6, T=3, n_attrs=2)
    params = LearnParams()
    model = model_from_tree(learn_tree(ls, params), params, ls.classes,
                            ls.attr_names)
    assert model_to_json(model) == model_to_json(model)
    assert model_to_json(model).endswith("\n")


def test_model_schema_version_checked():
    rng = np.random.default_rng(43)
    ls = _random_ls(rng, m=6, T=3, n_attrs=2)
    params = LearnParams()
    model = model_from_tree(learn_tree(ls, params), params, ls.classes,
                            ls.attr_names)
    doc = model_to_dict(model)
    doc["schema_version"] = 99
    with pytest.raises(ValueError):
        model_from_dict(doc)


def test_predict_model_validates_attrs():
    ls = _ls([[[0, 0, 0]], [[1, 1, 1]]], [0, 1])
    params = LearnParams()
    model = model_from_tree(learn_tree(ls, params), params, ls.classes,
                            ls.attr_names)
    mode, pred = predict_model(model, _cube([[1.0, 1.0, 1.0]]))
    assert mode == "modal" and pred in (0, 1)
    with pytest.raises(ValueError):
        predict_model(model, _cube([[1.0, 1.0, 1.0]], names=("other",)))
