import numpy as np
import pytest

from tue_lab.core.errors import (
    BadAssignment,
    BadConfig,
    ClassTooSmall,
    EmptySourceClass,
    FormatError,
    ShapeMismatch,
)
from tue_lab.core.kernel import rng_for
from tue_lab.core.losses import csd
from tue_lab.core.perturb import (
    AssignmentMap,
    assign_classwise,
    clamp_valid,
    class_derangement,
    class_pairs,
    expand_classes,
    expand_within,
    gather,
    interpolate_across,
    interpolate_within,
    load_perturbations,
    make_perturbation_set,
    perturbations_from_bytes,
    perturbations_to_bytes,
    pgd_minimize,
    project_linf,
    save_perturbations,
    swap_inter,
    swap_intra,
    synth_sn,
    zero_set,
)


def _pset(n_per=5, K=3, d=4, eps=0.1, seed=0):
    labels = np.repeat(np.arange(K), n_per)
    deltas = rng_for(seed, 0).uniform(-eps, eps, size=(labels.size, d))
    return make_perturbation_set(deltas, labels, eps, K=K, source_name="p")


def test_make_perturbation_set_enforces_budget():
    with pytest.raises(BadConfig):
        make_perturbation_set(np.full((2, 2), 0.2), np.array([0, 1]), 0.1)
    with pytest.raises(BadConfig):
        make_perturbation_set(np.zeros((2, 2)), np.array([0, 0]), 0.1, K=2)
    with pytest.raises(ShapeMismatch):
        make_perturbation_set(np.zeros((2, 2)), np.array([0, 1, 1]), 0.1)


def test_project_and_clamp():
    assert np.array_equal(project_linf(np.array([0.5, -0.5, 0.01]), 0.1), [0.1, -0.1, 0.01])
    x = np.full(3, 0.5)
    delta = np.array([0.1, -0.05, 0.0])
    assert np.array_equal(clamp_valid(x, delta), delta), "mid-gray pixels never clamp"
    clamped = clamp_valid(np.array([0.95, 0.02]), np.array([0.1, -0.1]))
    assert np.allclose(clamped, [0.05, -0.02], atol=1e-15)


def test_pgd_minimize_moves_against_gradient_inside_ball():
    delta = np.array([0.09, -0.09, 0.0])
    out = pgd_minimize(delta, np.array([-1.0, 1.0, 2.0]), 0.05, 0.1)
    assert np.allclose(out, [0.1, -0.1, -0.05])
    with pytest.raises(ShapeMismatch):
        pgd_minimize(delta, np.zeros(2), 0.05, 0.1)
    with pytest.raises(BadConfig):
        pgd_minimize(delta, np.zeros(3), 0.0, 0.1)


def test_swap_intra_is_a_within_class_derangement():
    pset = _pset()
    amap = swap_intra(pset, seed=4)
    assert np.all(amap.index != np.arange(pset.n)), "no sample keeps its own perturbation"
    assert np.array_equal(pset.labels[amap.index], pset.labels), "classes are preserved"
    assert np.array_equal(np.sort(amap.index), np.arange(pset.n)), "a permutation"


def test_swap_intra_needs_two_members():
    pset = make_perturbation_set(np.zeros((3, 2)), np.array([0, 0, 1]), 0.1)
    with pytest.raises(ClassTooSmall):
        swap_intra(pset, 0)


def test_swap_inter_moves_whole_classes():
    pset = _pset()
    pi = class_derangement(pset.K, 9)
    assert np.all(pi != np.arange(pset.K))
    amap = swap_inter(pset, seed=9)
    assert np.array_equal(pset.labels[amap.index], pi[pset.labels]), "class k receives class pi(k)"
    assert np.array_equal(np.sort(amap.index), np.arange(pset.n)), "equal classes keep the multiset"


def test_swap_inter_pads_larger_receivers():
    labels = np.array([0, 0, 0, 1])
    pset = make_perturbation_set(np.zeros((4, 2)), labels, 0.1)
    amap = swap_inter(pset, 1)
    assert np.all(pset.labels[amap.index] != labels)


def test_assign_classwise():
    pset = _pset()
    target = np.array([1, 1, 0, 2, 0])
    amap = assign_classwise(pset, target, [2, 0, 1], seed=3)
    assert np.array_equal(pset.labels[amap.index], np.array([2, 0, 1])[target])
    again = assign_classwise(pset, target, [2, 0, 1], seed=3)
    assert np.array_equal(amap.index, again.index), "seeded"
    with pytest.raises(EmptySourceClass):
        assign_classwise(pset, target, [0, 1, 7], seed=3)


def test_gather_validates_indices():
    pset = _pset()
    deltas, labels = gather(pset, AssignmentMap(np.array([0, 5])))
    assert deltas.shape == (2, pset.d) and list(labels) == [0, 1]
    with pytest.raises(BadAssignment):
        gather(pset, AssignmentMap(np.array([pset.n])))


def test_interpolate_within_stays_in_budget():
    pset = _pset()
    for alpha in (0.0, 0.3, 1.0):
        mixed = interpolate_within(pset, 1, alpha, pair_seed=2)
        assert np.max(np.abs(mixed)) <= pset.epsilon


def test_interpolate_across_midpoint_of_opposites():
    eps = 0.1
    deltas = np.array([[eps, eps], [eps, eps], [-eps, -eps], [-eps, -eps]])
    pset = make_perturbation_set(deltas, np.array([0, 0, 1, 1]), eps)
    out = interpolate_across(pset, (0, 1), 0.5, pair_seed=0)
    assert out.K == 3 and out.class_counts().tolist() == [2, 2, 2]
    assert np.allclose(out.deltas[out.members(2)], 0.0)
    with pytest.raises(BadConfig):
        interpolate_across(pset, (0, 1), 1.0, pair_seed=0)


def test_class_pairs_neighbours_first():
    assert class_pairs(4)[:4] == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert len(class_pairs(4)) == 6


def test_expand_classes_and_within():
    pset = _pset(n_per=6, K=4)
    wider = expand_classes(pset, 8, seed=1)
    assert wider.K == 8 and wider.linf() <= pset.epsilon
    assert np.isfinite(csd(wider.deltas, wider.labels, allow_floor=True)[0].csd)
    bigger = expand_within(pset, [12, 6, 8, 6], seed=2)
    assert bigger.class_counts().tolist() == [12, 6, 8, 6]
    assert np.array_equal(bigger.deltas[: pset.n], pset.deltas), "originals come first"


def test_synth_sn_patterns():
    labels = np.repeat(np.arange(4), 3)
    pset = synth_sn(labels, 4, (1, 5, 5), 0.1, 2, seed=0)
    eps = np.float32(0.1)
    assert np.all(np.abs(pset.deltas) == eps), "every entry is +-epsilon"
    for k in range(4):
        rows = pset.deltas[pset.members(k)]
        assert np.all(rows == rows[0]), "one pattern per class"
    patterns = {pset.deltas[pset.members(k)[0]].tobytes() for k in range(4)}
    assert len(patterns) == 4, "patterns are distinct"
    tile = pset.deltas[0].reshape(5, 5)
    assert np.array_equal(tile[:2, :2], tile[2:4, 2:4]), "patch is tiled"
    with pytest.raises(BadConfig):
        synth_sn(labels, 4, (1, 5, 5), 0.1, 6, seed=0)


def test_tuep_round_trip_and_corruption(tmp_path):
    pset = _pset()
    path = save_perturbations(pset, tmp_path / "noise.tuep")
    loaded = load_perturbations(path)
    assert loaded.equals(pset) and loaded.source_name == "noise"
    payload = perturbations_to_bytes(pset)
    with pytest.raises(FormatError):
        perturbations_from_bytes(b"XXXX" + payload[4:])
    with pytest.raises(FormatError):
        perturbations_from_bytes(payload[:-1])


def test_zero_set():
    z = zero_set(np.array([0, 1, 1]), 4, 0.05, 2)
    assert z.linf() == 0.0 and z.n == 3
