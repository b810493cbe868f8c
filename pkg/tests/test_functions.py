from jax import numpy as np, config

config.update("jax_enable_x64", True)
import pytest
from dKac.functions import (
    GaussianBump,
    Constant,
    HarmonicPotential,
    Translated,
    UserFunction,
    as_function,
    function_from_dict,
)


@pytest.fixture
def z():
    return np.array([1.0])


class TestGaussianBump:
    def test_constructor(self):
        GaussianBump()
        GaussianBump(2.0, 0.5, np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            GaussianBump(width=0.0)
        with pytest.raises(ValueError):
            GaussianBump(centre=np.ones((2, 2)))

    def test_call(self, z):
        bump = GaussianBump()
        assert np.allclose(bump(np.zeros(1)), 1.0)
        assert np.allclose(bump(z), np.exp(-1.0))
        assert np.allclose(GaussianBump(2.0, 2.0)(z), 2 * np.exp(-0.25))

    def test_gaussian_mean(self):
        bump = GaussianBump()
        assert np.allclose(bump.gaussian_mean(1.0, 1), 1 / np.sqrt(3))
        assert np.allclose(bump.gaussian_mean(1.0, 2), 1 / 3)
        shifted = GaussianBump(centre=1.0)
        expected = np.sqrt(1 / 3) * np.exp(-1 / 3)
        assert np.allclose(shifted.gaussian_mean(1.0, 1), expected)

    def test_shift(self, z):
        bump = GaussianBump()
        shifted = bump.shift(z)
        assert isinstance(shifted, GaussianBump)
        assert np.allclose(shifted(np.zeros(1)), bump(z))


class TestConstant:
    def test_constructor(self):
        with pytest.raises(ValueError):
            Constant(np.ones(2))

    def test_methods(self, z):
        c = Constant(0.25)
        assert np.allclose(c(z), 0.25)
        assert c.shift(z) is c
        assert c.gaussian_mean(1.0, 3) == 0.25
        assert c.constant_value() == 0.25
        assert GaussianBump().constant_value() is None


class TestHarmonicPotential:
    def test_call(self, z):
        V = HarmonicPotential()
        assert np.allclose(V(np.zeros(1)), 0.0)
        assert np.allclose(V(z), -0.5)
        assert np.allclose(V(np.array([10.0])), -18.0)
        assert V.gaussian_mean(1.0, 1) is None
        with pytest.raises(ValueError):
            HarmonicPotential(radius=-1.0)

    def test_shift(self, z):
        V = HarmonicPotential()
        assert np.allclose(V.shift(z)(np.zeros(1)), V(z))


class TestWrappers:
    def test_user_function(self, z):
        f = UserFunction(lambda x: x.sum() ** 2)
        assert np.allclose(f(2 * z), 4.0)
        with pytest.raises(TypeError):
            UserFunction(1.0)

    def test_translated(self, z):
        f = UserFunction(lambda x: x.sum())
        shifted = f.shift(2 * z)
        assert isinstance(shifted, Translated)
        assert np.allclose(shifted(z), 3.0)
        assert np.allclose(shifted.shift(z)(z), 4.0)

    def test_as_function(self):
        assert isinstance(as_function(2.0), Constant)
        assert isinstance(as_function(lambda x: x.sum()), UserFunction)
        bump = GaussianBump()
        assert as_function(bump) is bump

    def test_function_from_dict(self):
        f = function_from_dict({"preset": "gaussian_bump", "width": 2.0})
        assert isinstance(f, GaussianBump)
        assert np.allclose(f.width, 2.0)
        f = function_from_dict({"preset": "constant", "value": 0.5})
        assert f.constant_value() == 0.5
        with pytest.raises(ValueError):
            function_from_dict({"preset": "unknown"})
        with pytest.raises(ValueError):
            function_from_dict({"value": 1.0})
