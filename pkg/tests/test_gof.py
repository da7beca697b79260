import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from semgof.constraints import UnsupportedConfiguration
from semgof.gof import GofConfig, Method, default_method, gof_test
from semgof.rank_test import CrConfig
from semgof.poly_test import UTestConfig
from semgof.simlab import SimConfig, generate_h0

FAST = dict(cr=CrConfig(bootstrap_reps=200, mc_draws=20_000), ustat=UTestConfig(bootstrap_reps=300))


@pytest.fixture(scope="module")
def h0_data():
    return generate_h0(SimConfig(p=2, n=600), seed=12)


@pytest.fixture(scope="module")
def schema():
    text = resources.files("semgof").joinpath("schemas/gof_result.schema.json").read_text()
    return json.loads(text)


def test_method_parsing():
    assert Method.parse("ii") is Method.CR_PLUS_SECOND
    assert Method.parse("CR_ONLY") is Method.CR_ONLY
    assert Method.parse(3) is Method.USTAT_ALL
    with pytest.raises(ValueError, match="unknown method"):
        Method.parse("bogus")
    assert default_method(2) is Method.CR_PLUS_SECOND
    assert default_method(3) is Method.CR_PLUS_SECOND
    assert default_method(4) is Method.CR_ONLY


def test_config_validation():
    with pytest.raises(ValueError):
        GofConfig(alpha=1.5)
    with pytest.raises(ValueError):
        GofConfig(l=-1)


def test_ustat_all_restrictions(h0_data):
    with pytest.raises(UnsupportedConfiguration):
        gof_test(h0_data, GofConfig(l=1, method="iii"))
    data4 = generate_h0(SimConfig(p=4, n=200), seed=1)
    with pytest.raises(UnsupportedConfiguration):
        gof_test(data4, GofConfig(method="iii"))


def test_unsupported_latent_count(h0_data):
    with pytest.raises(UnsupportedConfiguration):
        gof_test(h0_data, GofConfig(l=2))


@pytest.mark.parametrize("method", ["i", "ii", "iii"])
def test_result_schema_and_decision(h0_data, schema, method):
    res = gof_test(h0_data, GofConfig(method=method, seed=3, **FAST))
    assert res.reject == (res.p_value < res.alpha)
    d = res.to_dict()
    jsonschema.validate(d, schema)
    assert "timings_ms" in d
    assert "timings_ms" not in res.to_dict(timings=False)
    assert res.summary().startswith(res.decision.upper())


def test_bonferroni_rule(h0_data):
    for seed in range(5):
        res = gof_test(h0_data, GofConfig(method="ii", seed=seed, **FAST))
        pa, pb = (c["p_value"] for c in res.conditions)
        assert res.p_value == min(1.0, 2 * min(pa, pb))
        assert res.reject == (pa < 0.025 or pb < 0.025)


def test_seed_reproducibility(h0_data):
    a = gof_test(h0_data, GofConfig(method="ii", seed=9, **FAST)).to_dict(timings=False)
    b = gof_test(h0_data, GofConfig(method="ii", seed=9, **FAST)).to_dict(timings=False)
    assert a == b


def test_column_permutation_invariance(h0_data):
    cfg = GofConfig(method="i", seed=4, **FAST)
    a = gof_test(h0_data, cfg)
    b = gof_test(h0_data.values[:, ::-1], cfg)
    assert np.isclose(a.p_value, b.p_value, rtol=1e-8)
    assert a.decision == b.decision


def test_scaling_invariance(h0_data):
    cfg = GofConfig(method="ii", seed=4, **FAST)
    a = gof_test(h0_data, cfg)
    b = gof_test(h0_data.values * [10.0, 0.01], cfg)
    assert np.isclose(a.p_value, b.p_value, rtol=1e-8)
    assert a.decision == b.decision


def test_small_sample_warning():
    data = generate_h0(SimConfig(p=2, n=40), seed=2)
    with pytest.warns(RuntimeWarning, match="small"):
        res = gof_test(data, GofConfig(method="i", seed=1, **FAST))
    assert res.warnings


def test_rank_type_second_condition():
    data = generate_h0(SimConfig(p=4, n=1500), seed=5)
    res = gof_test(data, GofConfig(method="ii", seed=1, **FAST))
    assert [c["test"] for c in res.conditions] == ["cr", "cr"]
    assert res.conditions[1]["condition"] == "rank Y_3(C^(3)) <= 12"


def test_latent_plan_p2():
    data = generate_h0(SimConfig(p=2, l_tested=1, n=1000), seed=3)
    res = gof_test(data, GofConfig(l=1, seed=2, **FAST))
    assert res.to_dict()["l"] == 1
    assert res.conditions[0]["matrix_orders"] == [3, 4, 5]
