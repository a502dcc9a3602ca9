import warnings

import numpy as np
import pytest

from fluxsampling import (InterfaceSet, NonImprovingIteration, RegionSpec, TrialBudget,
                          relocate_interfaces, run_iffs)
from fluxsampling.core import child_seed
from fluxsampling.models import BirthDeathChain
from fluxsampling.oracles import exact_interface_probabilities
from fluxsampling.stats import dispersion, summarize


def steep_walk():
    return BirthDeathChain.piecewise([(10, 0.47), (8, 0.3), (12, 0.47)]), RegionSpec(1, 28)


def test_uniform_probabilities_are_a_fixed_point():
    iface = InterfaceSet.equal_spaced(-0.6, 0.8, 8)
    new = relocate_interfaces(iface, [0.3] * 7)
    np.testing.assert_allclose(new.lambdas, iface.lambdas, atol=1e-12)
    iface = InterfaceSet.equal_spaced(3, 28, 6, integer=True)
    assert relocate_interfaces(iface, [0.4] * 5, integer=True).lambdas == iface.lambdas


def test_relocation_concentrates_in_steep_segment():
    chain, reg = steep_walk()
    i0 = InterfaceSet.equal_spaced(3, 28, 7, integer=True)
    p0 = exact_interface_probabilities(chain, i0, reg.lambda_A)
    i1 = relocate_interfaces(i0, p0, integer=True)
    p1 = exact_interface_probabilities(chain, i1, reg.lambda_A)
    steep = lambda lam: sum(10 <= x <= 18 for x in lam)
    assert steep(i1.lambdas) > steep(i0.lambdas)
    assert dispersion(p1) < dispersion(p0)
    assert len(i1) == len(i0) and i1[0] == i0[0] and i1[-1] == i0[-1]


def test_relocation_keeps_strict_order():
    iface = InterfaceSet((0.0, 1.0, 2.0, 3.0, 4.0))
    new = relocate_interfaces(iface, [1e-8, 1.0, 1.0, 1.0], integer=True)
    assert np.all(np.diff(new.lambdas) > 0) and len(new) == 5
    new = relocate_interfaces(InterfaceSet((0.0, 1.0, 2.0, 3.0)), [1e-30, 1.0, 1.0])
    assert np.all(np.diff(new.lambdas) > 0)
    with pytest.raises(ValueError):
        relocate_interfaces(iface, [0.5])


def test_run_iffs_schedule():
    chain, reg = steep_walk()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonImprovingIteration)
        sched = run_iffs(chain, reg, 7, 3, TrialBudget(n_trials=300), seed=1, T_steps=20_000,
                         lambda_0=3)
    assert sched.iterations == 4
    assert sched.interfaces[0] == InterfaceSet.equal_spaced(3, 28, 7, integer=True)
    assert all(len(i) == len(sched.interfaces[0]) for i in sched.interfaces)
    assert sched.k_AB == sched.rates[-1].k_AB
    assert sched.wall_time >= sum(sched.wall_times)
    assert dispersion(sched.rates[-1].probabilities) < dispersion(sched.rates[0].probabilities)
    with pytest.raises(ValueError):
        run_iffs(chain, reg, 7, 0, TrialBudget(), seed=1, T_steps=100, lambda_0=3)


def test_non_improving_iteration_warns(walk):
    chain, reg = walk
    # on a homogeneous walk the first equal-spaced run is already near optimal
    with pytest.warns(NonImprovingIteration):
        for s in range(5):
            run_iffs(chain, reg, 5, 3, TrialBudget(n_trials=500), seed=s, T_steps=20_000, lambda_0=3)


def test_rates_agree_across_iterations():
    chain, reg = steep_walk()
    runs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonImprovingIteration)
        for r in range(60):
            runs.append(run_iffs(chain, reg, 7, 2, TrialBudget(n_trials=200), seed=child_seed(3, r),
                                 T_steps=20_000, lambda_0=3))
    first = summarize([s.rates[0].k_AB for s in runs])
    last = summarize([s.rates[-1].k_AB for s in runs])
    assert abs(first.mean - last.mean) <= 3 * np.hypot(first.se, last.se)
