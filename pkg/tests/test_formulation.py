import math

import numpy as np
import pytest

from helpers import make_instance, tiny3
from slicekit.formulation import (
    MILP, MINLP, SYMBOLS, VariantFlags, build, build_common, build_milp, build_minlp_linearized, symbol_of,
)
from slicekit.instance import GenConfig, generate_instance
from slicekit.model import FAMILIES, Model, export_model, lp_names, lp_relaxation, name_map_from_lp
from slicekit.solver import SolveLimits, branch_and_bound, solve_lp

EXACT = SolveLimits(time_limit=60, rel_gap=0.0)


@pytest.fixture(scope="module")
def gen10():
    cfg = GenConfig(num_nodes=10, num_links=30, num_clouds=3, num_layers=3, num_services=2, sfc_length=2)
    return generate_instance(cfg, 4)


def expected_counts(inst, formulation, P=None, no_reliability=False):
    """Row counts per family, derived by hand from the index sets."""
    P = P or inst.P
    N, V, L = len(inst.nodes), len(inst.clouds), len(inst.links)
    K = len(inst.services)
    ell = [s.length for s in inst.services]
    F = [l + 1 for l in ell]
    c = {
        "placement": sum(ell),
        "hosting": V * sum(ell),
        "activation": K * V,
        "node-capacity": V,
        "path-flow": N * P * sum(F),
        "link-capacity": L,
        "flow-delay": P * sum(F),
        "delay-budget": K,
    }
    if not no_reliability:
        c["link-use"] = L * P * sum(F)
        c["reliability"] = K
    if formulation == MILP:
        c["out-degree"] = N * P * sum(F)
        c["rate-on-link"] = L * P * sum(F)
        # sources and sinks: every cloud node for every flow, plus S for the first and D for the last
        c["rate-endpoints"] = sum(f * V + 2 for f in F)
        # non-cloud nodes per (s, p), minus the source pair and the sink pair
        c["rate-transit"] = sum((N - V) * f * P - 2 * P for f in F)
        c["cloud-inflow"] = P * V * sum(ell)
        c["cloud-outflow"] = P * V * sum(ell)
        c["valid-rate-delay"] = sum(F)
        if not no_reliability:
            c["valid-link-use"] = L * sum(F)
    else:
        c["path-split"] = sum(F)
        c["mccormick"] = 3 * L * P * sum(F)
    return c


def test_tiny3_placement_row():
    m = build_milp(tiny3())
    rows = m.rows("placement")
    assert len(rows) == 1
    assert len(rows[0].coeffs) == 1 and rows[0].rhs == 1 and rows[0].sense == "="


@pytest.mark.parametrize("formulation", [MILP, MINLP])
@pytest.mark.parametrize("flags", [VariantFlags(), VariantFlags(single_path=True), VariantFlags(no_reliability=True)])
def test_family_counts_closed_form(gen10, formulation, flags):
    m = build(gen10, formulation, flags=flags)
    P = 1 if flags.single_path else None
    assert m.family_counts() == expected_counts(gen10, formulation, P, flags.no_reliability)


def test_tags_come_from_closed_set(gen10):
    for builder in (build_milp, build_minlp_linearized):
        m = builder(gen10)
        assert {c.family for c in m.constraints} <= set(FAMILIES)
        assert all(a != 0 for c in m.constraints for a in c.coeffs.values())


def test_common_rows_are_shared(gen10):
    common = build_common(gen10).family_counts()
    milp = build_milp(gen10).family_counts()
    minlp = build_minlp_linearized(gen10).family_counts()
    for fam, n in common.items():
        assert milp[fam] == n == minlp[fam]


def test_registry_round_trip(gen10):
    for builder, symbols in ((build_milp, set(SYMBOLS) - {"rpath"}), (build_minlp_linearized, set(SYMBOLS))):
        m = builder(gen10)
        seen = set()
        for v in m.variables:
            sym, idx = symbol_of(v.name)
            seen.add(sym)
            assert v.is_binary == (sym in ("x", "xv", "y", "z", "zagg"))
            if v.is_binary:
                assert (v.lower, v.upper) == (0.0, 1.0)
        assert seen == symbols
        assert len({v.name for v in m.variables}) == len(m.variables)


def test_symbol_indices_are_typed():
    assert symbol_of("z[a,b,k0,1,2]") == ("z", ("a", "b", "k0", 1, 2))
    assert symbol_of("x[v,2,k]") == ("x", ("v", 2, "k"))
    with pytest.raises(ValueError):
        symbol_of("w[1]")


def test_milp_has_no_rpath(gen10):
    m = build_milp(gen10)
    assert not any(v.name.startswith("rpath[") for v in m.variables)


def test_transit_rows_are_homogeneous_equalities(gen10):
    for c in build_milp(gen10).rows("rate-transit"):
        assert c.sense == "=" and c.rhs == 0


def test_row_width_bound(gen10):
    m = build_milp(gen10)
    widest = max(len(c.coeffs) for c in m.constraints)
    assert widest <= len(gen10.links) * gen10.P + 1


def test_rpath_block_size(gen10):
    milp, minlp = build_milp(gen10), build_minlp_linearized(gen10)
    extra = sum((s.length + 1) * gen10.P for s in gen10.services)
    assert len(minlp.variables) - len(milp.variables) == extra


def test_reliability_row_uses_natural_logs():
    m = build_milp(tiny3(gamma=0.9))
    (row,) = m.rows("reliability")
    assert row.sense == ">=" and row.rhs == pytest.approx(math.log(0.9), abs=0)
    assert m.index("xv[v,k]") in row.coeffs
    assert row.coeffs[m.index("xv[v,k]")] == math.log(0.995)


def test_gamma_one_makes_reliability_infeasible():
    m = build_milp(tiny3(gamma=1.0))
    (row,) = m.rows("reliability")
    assert row.rhs == 0
    assert branch_and_bound(m, EXACT).status == "infeasible"


def test_gamma_zero_skips_reliability_row():
    m = build_milp(tiny3(gamma=0.0))
    assert "reliability" not in m.family_counts()


def test_sigma_must_be_positive():
    with pytest.raises(ValueError):
        build_milp(tiny3(), sigma=0.0)
    assert build_milp(tiny3(), sigma=0.0, allow_sigma=True).sigma == 0.0
    with pytest.raises(ValueError):
        build(tiny3(), "other")


@pytest.mark.parametrize("builder", [build_milp, build_minlp_linearized])
def test_tiny3_optimum(builder):
    res = branch_and_bound(builder(tiny3()), EXACT)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(1.01, abs=1e-9)


def test_single_path_minlp_collapses_mccormick():
    m = build_minlp_linearized(tiny3(), flags=VariantFlags(single_path=True))
    for row in m.rows("path-split"):
        assert len(row.coeffs) == 1 and row.rhs == 1
    res = branch_and_bound(m, EXACT)
    sol = res.solution
    for name, val in sol.items():
        if name.startswith("r["):
            assert val == pytest.approx(sol["z" + name[1:]], abs=1e-9)


def split_instance():
    # a rate-10 flow must cross two capacity-6 links in parallel
    return make_instance(
        ["S", "a", "b", "v", "D"], {"v": (100.0, 0.995)},
        [("S", "a", 1, 0.999, 6.0), ("S", "b", 1, 0.999, 6.0), ("a", "v", 1, 0.999, 20.0),
         ("b", "v", 1, 0.999, 20.0), ("v", "D", 1, 0.999, 20.0)],
        [{"id": "k", "source": "S", "destination": "D", "rate": 10, "theta": 30, "gamma": 0.9}],
    )


def test_split_needs_two_paths():
    inst = split_instance()
    multi = branch_and_bound(build_milp(inst), EXACT)
    single = branch_and_bound(build_milp(inst, flags=VariantFlags(single_path=True)), EXACT)
    assert multi.status == "optimal"
    assert single.status == "infeasible"


@pytest.mark.parametrize("seed", range(6))
def test_restrictions_order_objectives(seed):
    cfg = GenConfig(num_nodes=8, num_links=20, num_clouds=2, num_layers=3, num_services=2, sfc_length=2)
    inst = generate_instance(cfg, seed)
    full = branch_and_bound(build_milp(inst), EXACT)
    single = branch_and_bound(build_milp(inst, flags=VariantFlags(single_path=True)), EXACT)
    norel = branch_and_bound(build_milp(inst, flags=VariantFlags(no_reliability=True)), EXACT)
    if single.has_incumbent:
        assert full.has_incumbent
        assert single.objective >= full.objective - 1e-9
    if full.has_incumbent:
        assert norel.objective <= full.objective + 1e-9


def test_no_reliability_drops_families():
    m = build_milp(tiny3(), flags=VariantFlags(no_reliability=True))
    fams = m.family_counts()
    for fam in ("link-use", "reliability", "valid-link-use"):
        assert fam not in fams
    assert not any(v.name.startswith("zagg[") for v in m.variables)


def test_no_reliability_agrees_on_tiny3():
    a = branch_and_bound(build_milp(tiny3(gamma=0.9)), EXACT)
    b = branch_and_bound(build_milp(tiny3(gamma=0.9), flags=VariantFlags(no_reliability=True)), EXACT)
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_valid_inequality_switch(gen10):
    m = build_milp(gen10, flags=VariantFlags(valid_inequalities=False))
    assert "valid-link-use" not in m.family_counts() and "valid-rate-delay" not in m.family_counts()


def test_lp_relaxation_idempotent(gen10):
    m = build_milp(gen10)
    r1 = lp_relaxation(m)
    r2 = lp_relaxation(r1)
    assert not any(v.is_binary for v in r1.variables)
    assert [(v.name, v.lower, v.upper, v.integrality) for v in r1.variables] == \
           [(v.name, v.lower, v.upper, v.integrality) for v in r2.variables]
    assert m.num_binary > 0  # original untouched


@pytest.mark.parametrize("builder", [build_milp, build_minlp_linearized])
def test_relaxation_bounds_integer_optimum(builder):
    inst = tiny3()
    lp = solve_lp(lp_relaxation(builder(inst)))
    ip = branch_and_bound(builder(inst), EXACT)
    assert 0 <= lp.objective <= ip.objective + 1e-9


def one_var_model():
    m = Model(sigma=1.0, variant="toy")
    j = m.add_var("y[v0]", binary=True)
    m.set_objective([(j, 1.0)])
    return m


def test_export_one_var():
    text = export_model(one_var_model())
    assert "Minimize\n obj: + 1 y[v0]\n" in text
    assert "Bounds\n 0 <= y[v0] <= 1\n" in text
    assert text.rstrip().endswith("End")
    assert "Binaries\n y[v0]" in text


def test_export_is_deterministic_ascii(gen10):
    a = export_model(build_milp(gen10))
    b = export_model(build_milp(gen10))
    assert a == b
    assert a.isascii()
    assert "Subject To" in a and " placement_1:" in a


def test_export_seventeen_digits():
    m = build_milp(tiny3())
    text = export_model(m)
    assert repr(float(f"{math.log(0.995):.17g}")) == repr(math.log(0.995))
    assert f"{-math.log(0.995):.17g}" in text


def test_safe_names_round_trip(gen10):
    m = build_milp(gen10)
    text = export_model(m, safe_names=True)
    names = lp_names(m, safe=True)
    assert all("[" not in n for n in names)
    back = name_map_from_lp(text)
    assert [back.get(n, n) for n in names] == [v.name for v in m.variables]


def test_overlong_names_are_mangled():
    m = Model(sigma=1.0)
    j = m.add_var("x[" + "a" * 300 + "]")
    m.set_objective([(j, 1.0)])
    text = export_model(m, safe_names=True)
    assert "\\ map v0 x[" in text


def test_model_rejects_bad_rows():
    m = one_var_model()
    with pytest.raises(ValueError):
        m.add_constraint([(0, 1.0)], "<", 1.0, "placement")
    with pytest.raises(ValueError):
        m.add_constraint([(0, 1.0)], "<=", 1.0, "nonsense")
    assert m.add_constraint([(0, 0.0)], "<=", 1.0, "placement") is None
    empty = m.add_constraint([], "=", 1.0, "placement")
    assert empty is not None and not empty.coeffs


def test_arrays_match_rows(gen10):
    m = build_minlp_linearized(gen10)
    arr = m.arrays
    x = np.random.default_rng(0).random(len(m.variables))
    act = arr.A @ x
    for r, c in enumerate(m.constraints[:200]):
        assert act[r] == pytest.approx(sum(a * x[j] for j, a in c.coeffs.items()))
