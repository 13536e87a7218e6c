import numpy as np
import pytest

from sparse_rrnn.model import RationalModel, WfsaParams, forward_batch
from sparse_rrnn.pruning import (
    PrunedStructure, check_suffix_removal, count_transitions, prune, zero_pruned_groups,
)

from conftest import random_model


def model_with_norms(rng, norms_per_wfsa, d_emb=3):
    wfsas = []
    for norms in norms_per_wfsa:
        p = rng.normal(size=(len(norms), 2 * d_emb + 2))
        p *= (np.array(norms) / np.linalg.norm(p, axis=1))[:, None]
        wfsas.append(WfsaParams(p))
    return RationalModel(wfsas, rng.normal(size=len(wfsas)), rng.normal(), d_emb)


def test_suffix_check():
    assert check_suffix_removal([5, 4, 0.01, 0.01], 0.1) == (True, None)
    assert check_suffix_removal([5, 0.01, 4, 0.01], 0.1) == (False, 2)
    assert check_suffix_removal([], 0.1) == (True, None)
    assert check_suffix_removal([0.01, 0.01], 0.1) == (True, None)


def test_count_transitions_reference_configurations():
    for k, total in ((1, 24), (2, 48), (3, 72), (4, 96)):
        assert count_transitions(PrunedStructure((k,) * 24, (k,) * 24)) == total
    mixed = tuple(k for k in (1, 2, 3, 4) for _ in range(6))
    assert count_transitions(PrunedStructure(mixed, mixed)) == 60
    assert count_transitions(PrunedStructure((4, 4), (0, 0))) == 0


def test_structure_validation():
    with pytest.raises(ValueError):
        PrunedStructure((2,), (3,))


def test_epsilon_zero_keeps_everything(rng):
    m = random_model(rng, [4, 2, 3], 3)
    s, c, rep = prune(m, 0.0)
    assert s.surviving_states == (4, 2, 3)
    np.testing.assert_array_equal(c.to_vector(), m.to_vector())
    assert rep.warnings == []


def test_suffix_removal_example(rng):
    m = model_with_norms(rng, [[5.0, 0.05, 0.04, 0.03]])
    s, c, rep = prune(m, 0.1)
    assert s.surviving_states == (1,)
    assert rep.removed == [[2, 3, 4]]
    assert rep.norms[0] == pytest.approx([5.0, 0.05, 0.04, 0.03])
    assert check_suffix_removal(rep.norms[0], 0.1)[0]
    assert c.ks == (1,)


def test_interior_removal_cascades(rng):
    m = model_with_norms(rng, [[5.0, 0.01, 4.0, 3.0], [1.0, 1.0]])
    s, c, rep = prune(m, 0.1)
    assert s.surviving_states == (1, 2)
    assert rep.removed[0] == [2, 3, 4]
    assert len(rep.warnings) == 1 and "state 2" in rep.warnings[0]


def test_everything_pruned(rng):
    m = model_with_norms(rng, [[0.01, 0.02], [0.05]])
    s, c, _ = prune(m, 0.1)
    assert s.surviving_states == (0, 0) and s.removed == (True, True)
    assert c.d == 0 and float(c.classifier_bias) == float(m.classifier_bias)
    doc = rng.normal(size=(4, 3))
    assert forward_batch(c, [doc]).logits[0] == float(m.classifier_bias)


def test_removed_wfsa_drops_classifier_weight(rng):
    m = model_with_norms(rng, [[1.0], [0.01], [2.0, 2.0]])
    s, c, _ = prune(m, 0.1)
    np.testing.assert_array_equal(c.classifier_weight, m.classifier_weight[[0, 2]])


def test_compaction_exact(rng):
    for _ in range(20):
        d_emb = 3
        norms = [list(rng.choice([0.01, 2.0], size=int(rng.integers(1, 5)))) for _ in range(4)]
        m = model_with_norms(rng, norms, d_emb)
        s, c, _ = prune(m, 0.1)
        zeroed = zero_pruned_groups(m, s)
        docs = [rng.normal(size=(int(n), d_emb)) for n in rng.integers(1, 10, size=5)]
        full, small = forward_batch(zeroed, docs), forward_batch(c, docs)
        kept = [j for j, k in enumerate(s.surviving_states) if k]
        np.testing.assert_array_equal(full.scores[:, kept], small.scores)
        np.testing.assert_array_equal(full.logits, small.logits)


def test_reprune_idempotent(rng):
    m = model_with_norms(rng, [[3.0, 0.05, 0.2], [0.2, 0.3, 0.01, 0.02], [0.01]])
    s, c, _ = prune(m, 0.1)
    s2, c2, _ = prune(c, 0.1)
    assert s2.surviving_states == c.ks
    np.testing.assert_array_equal(c2.to_vector(), c.to_vector())


def test_monotone_in_epsilon(rng):
    m = model_with_norms(rng, [list(rng.uniform(0, 1, size=4)) for _ in range(6)])
    counts = [count_transitions(prune(m, eps)[0]) for eps in np.linspace(0, 1.1, 23)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] == 24 and counts[-1] == 0


def test_report_serializes(rng):
    m = model_with_norms(rng, [[1.0, 0.01]])
    _, _, rep = prune(m, 0.1)
    import json

    data = json.loads(rep.to_text())
    assert data["epsilon"] == 0.1 and data["removed"] == [[2]]
