"""Shared fixtures: small random instances and exhaustive policy enumeration."""

import itertools

import numpy as np
import pytest

from cmdplab import Policy, TabularCmdp


def random_instance(num_states, num_actions, horizon, seed, budget=None):
    """Dirichlet kernel, uniform stage arrays; budget defaults to H/2."""
    rng = np.random.default_rng(seed)
    shape = (horizon, num_states, num_actions)
    kernel = rng.dirichlet(np.ones(num_states), size=shape)
    reward = rng.uniform(size=shape)
    cost = rng.uniform(size=shape)
    b = horizon / 2.0 if budget is None else budget
    return TabularCmdp(num_states, num_actions, horizon, kernel, reward, cost, b, 0)


def all_deterministic_policies(m):
    """Every map (h, s) -> a as a Policy; A**(S*H) of them, keep instances tiny."""
    cells = [(h, s) for h in range(m.horizon) for s in range(m.num_states)]
    for choice in itertools.product(range(m.num_actions), repeat=len(cells)):
        actions = np.zeros((m.horizon, m.num_states), dtype=int)
        for (h, s), a in zip(cells, choice):
            actions[h, s] = a
        yield Policy.from_actions(actions, m.num_actions)


@pytest.fixture
def make_instance():
    return random_instance


@pytest.fixture
def enumerate_policies():
    return all_deterministic_policies
