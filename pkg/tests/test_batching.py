import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsnmt.batching import BatchPlan, plan_batches, restore_order
from dsnmt.errors import InternalStateError


def test_example_plan():
    plan = plan_batches([3, 5, 2, 4], max_tokens=10)
    assert plan.batches == [[1, 3], [0, 2]]
    assert plan.original_index == [1, 3, 0, 2]


def test_cap_of_one():
    assert plan_batches([2, 2, 2], 1000, max_sentences=1).batches == [[0], [1], [2]]


def test_oversized_sentence_alone():
    assert plan_batches([50, 3, 3], 10).batches == [[0], [1, 2]]


def test_stable_on_ties():
    assert plan_batches([4, 4, 4, 4], 8).batches == [[0, 1], [2, 3]]


def test_empty():
    plan = plan_batches([], 10)
    assert plan.batches == [] and restore_order([], plan) == []


def test_bad_cap():
    with pytest.raises(ValueError):
        plan_batches([1], 10, max_sentences=0)


@settings(max_examples=300)
@given(st.lists(st.integers(1, 60), max_size=80), st.integers(1, 400), st.one_of(st.none(), st.integers(1, 20)))
def test_budget_and_coverage(lengths, budget, cap):
    plan = plan_batches(lengths, budget, cap)
    assert sorted(plan.original_index) == list(range(len(lengths)))
    for b in plan.batches:
        longest = max(lengths[i] for i in b)
        assert len(b) == 1 or len(b) * longest <= budget
        if cap is not None:
            assert len(b) <= cap
    flat = [lengths[i] for i in plan.original_index]
    assert flat == sorted(flat, reverse=True)


def test_restore_order_identity_and_reverse():
    assert restore_order(["a", "b"], BatchPlan([[0], [1]])) == ["a", "b"]
    assert restore_order(["b", "a"], BatchPlan([[1, 0]])) == ["a", "b"]


def test_restore_order_random_permutation():
    r = random.Random(5)
    for _ in range(50):
        n = r.randint(1, 40)
        lengths = [r.randint(1, 30) for _ in range(n)]
        plan = plan_batches(lengths, r.randint(1, 100), r.randint(1, 8))
        outputs = [f"out{i}" for i in plan.original_index]
        assert restore_order(outputs, plan) == [f"out{i}" for i in range(n)]


def test_restore_order_count_mismatch():
    with pytest.raises(InternalStateError):
        restore_order(["x"], BatchPlan([[0, 1]]))
