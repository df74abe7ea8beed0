import math

import numpy as np
import pytest

from igeo import models
from igeo.errors import OutOfDomain, SchemaError
from igeo.models import (CATALOG, Box, SampleSpace, StatisticalModel,
                         load_model, log_density, reference_grid, score,
                         validate_model)
from igeo.numerics import ExpectationRule, expect

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class TestLogDensity:
    def test_normal_natural_at_standard_point(self, normal_natural_model):
        # l(0; (-1/2, 0)) = -K = -log(2 pi)/2
        val = log_density(normal_natural_model, 0.0, (-0.5, 0.0))
        assert val == pytest.approx(-HALF_LOG_2PI, abs=1e-12)

    def test_bernoulli_at_zero(self, bernoulli_model):
        assert log_density(bernoulli_model, 1.0, (0.0,)) == \
            pytest.approx(-math.log(2.0), abs=1e-14)

    def test_normalization_across_catalog(self):
        for name, factory in CATALOG.items():
            model = factory()
            theta = reference_grid(name)[0]
            total = expect(model.space, model.density(theta),
                           lambda x: np.ones(len(x)))
            assert total == pytest.approx(1.0, abs=model.tolerance), name

    def test_out_of_domain(self, normal_natural_model):
        with pytest.raises(OutOfDomain):
            log_density(normal_natural_model, 0.0, (0.5, 0.0))

    def test_score_zero_mean_across_catalog(self):
        # differentiating the normalization: E[score_i] = 0
        for name, factory in CATALOG.items():
            model = factory()
            for theta in reference_grid(name):
                weight = model.density(theta)
                for i in range(model.dim):
                    mean = expect(model.space, weight,
                                  lambda x, i=i: models.score_matrix(
                                      model, theta, x)[i])
                    assert abs(mean) < model.tolerance, (name, theta, i)

    def test_score_scalar_api(self, bernoulli_model):
        # score of bernoulli at x=1, theta=0 is 1 - p = 0.5
        assert score(bernoulli_model, 1.0, (0.0,), 0) == \
            pytest.approx(0.5, abs=1e-9)


class TestValidateModel:
    def test_normal_passes(self, normal_model):
        rep = validate_model(normal_model, [(0.0, 1.0), (1.0, 2.0)])
        assert rep.passed
        assert rep.max_normalization_residual < 1e-6

    def test_bernoulli_zero_residual(self, bernoulli_model):
        rep = validate_model(bernoulli_model, [(-2.0,), (0.0,), (2.0,)])
        assert rep.passed
        assert rep.max_normalization_residual < 1e-14

    def test_unnormalized_density_fails(self):
        # exp(-x^2) integrates to sqrt(pi), residual |sqrt(pi) - 1|
        rule = ExpectationRule.gauss_hermite(64, scale=1.5)
        bad = StatisticalModel(
            space=SampleSpace.real_line(rule), dim=1,
            domain=Box((-1.0,), (1.0,)),
            log_density=lambda x, th: -(x[..., 0] - th[0]) ** 2,
            label="unnormalized")
        rep = validate_model(bad, [(0.0,)])
        assert not rep.passed
        assert rep.max_normalization_residual == \
            pytest.approx(math.sqrt(math.pi) - 1.0, abs=1e-6)

    def test_catalog_reference_grids(self):
        for name, factory in CATALOG.items():
            model = factory()
            rep = validate_model(model, reference_grid(name))
            assert rep.passed, (name, rep.max_normalization_residual)
            assert all(e.smooth for e in rep.entries), name
            assert all(e.score_gram_condition < 1e12 for e in rep.entries), name


class TestCatalog:
    def test_poisson_truncation_mass(self):
        model = CATALOG["poisson-natural"]()
        lam = math.exp(2.4)
        pts = model.space.points[:, 0]
        from scipy import stats
        mass = stats.poisson.cdf(pts.max(), lam)
        assert mass > 1.0 - 1e-10

    def test_categorical_dimensions(self):
        model = models.categorical_natural(3)
        assert model.dim == 3
        assert len(model.space.points) == 4

    def test_location_family_variants(self):
        for q in ("logistic", "gaussian"):
            for k in (1, 2):
                model = models.location_family(q, k)
                assert model.dim == k
        with pytest.raises(ValueError):
            models.location_family("cauchy", 1)
        with pytest.raises(ValueError):
            models.location_family("logistic", 3)

    def test_quad_nodes_env_override(self, monkeypatch):
        monkeypatch.setenv("IGEO_QUAD_NODES", "48")
        model = models.normal_mean_sigma()
        assert model.space.rule.nodes == 48
        monkeypatch.setenv("IGEO_QUAD_NODES", "zero")
        with pytest.raises(SchemaError):
            models.normal_mean_sigma()


class TestLoadModel:
    def test_builtin_reference(self):
        model = load_model({"builtin": "normal-natural"})
        assert model.label == "normal-natural"

    def test_expression_model_matches_catalog(self, bernoulli_model):
        doc = {
            "name": "bernoulli-expr",
            "dim": 1,
            "space": {"kind": "finite-discrete", "points": [[0.0], [1.0]]},
            "domain": {"lo": [-6.0], "hi": [6.0]},
            "log_density": "x[0]*theta[0] - log(1 + exp(theta[0]))",
        }
        model = load_model(doc)
        xs = model.space.points
        for theta in ((-2.0,), (0.0,), (2.0,)):
            got = model.log_density(xs, np.asarray(theta))
            want = bernoulli_model.log_density(xs, np.asarray(theta))
            assert np.abs(got - want).max() < 1e-12

    def test_missing_dim_is_schema_error(self):
        with pytest.raises(SchemaError):
            load_model({"name": "broken", "space": {"kind": "real-line"},
                        "domain": {"lo": [0.0], "hi": [1.0]},
                        "log_density": "x[0]"})

    def test_unknown_builtin(self):
        with pytest.raises(SchemaError):
            load_model({"builtin": "students-t"})

    def test_domain_mismatch(self):
        with pytest.raises(SchemaError):
            load_model({"name": "m", "dim": 2,
                        "space": {"kind": "finite-discrete",
                                  "points": [[0.0], [1.0]]},
                        "domain": {"lo": [0.0], "hi": [1.0]},
                        "log_density": "x[0]*theta[0]"})


class TestSampleSpace:
    def test_finite_needs_two_distinct_points(self):
        with pytest.raises(ValueError):
            SampleSpace.finite([[1.0], [1.0]])

    def test_real_needs_quadrature(self):
        with pytest.raises(ValueError):
            SampleSpace(kind="real-line", xdim=1, rule=ExpectationRule.exact())

    def test_box_validation(self):
        with pytest.raises(ValueError):
            Box((0.0,), (0.0,))
        box = Box((0.0, 0.0), (1.0, 2.0))
        assert box.contains((0.5, 1.0))
        assert not box.contains((0.5, 2.5))
        assert not box.contains((0.5,))
