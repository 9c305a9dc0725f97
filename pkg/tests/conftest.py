import json

import mpmath
import pytest

from app.models.schemas import GeneratingFunction
from app.services.attractor import asymptotic_context

SQRT2 = "1.4142135623730950488016887"


def catalog(name: str, order: int = 1) -> GeneratingFunction:
    return GeneratingFunction(kind="catalog", name=name, order=order)


def poly(*roots) -> GeneratingFunction:
    return GeneratingFunction(kind="poly", roots=list(roots))


@pytest.fixture(scope="session")
def one_minus_t():
    return catalog("one_minus_t")


@pytest.fixture(scope="session")
def euler():
    return catalog("euler")


@pytest.fixture(scope="session")
def bessel():
    return catalog("bessel_j0")


@pytest.fixture(scope="session")
def cubic():
    """(t - 1)(t^2 + 2)"""
    return poly({"re": 1}, {"re": 0, "im": SQRT2}, {"re": 0, "im": "-" + SQRT2})


@pytest.fixture(scope="session")
def three_roots():
    return poly(
        {"modulus": 1.2, "arg_over_pi": 0.1875},
        {"modulus": 1.3, "arg_over_pi": 0.4375},
        {"modulus": 1.5, "arg_over_pi": 0},
    )


@pytest.fixture(scope="session")
def szego_ctx(one_minus_t):
    return asymptotic_context(one_minus_t, 2.0, 192)


@pytest.fixture(scope="session")
def euler_ctx(euler):
    return asymptotic_context(euler, 4.0, 192)


@pytest.fixture(scope="session")
def three_roots_ctx(three_roots):
    return asymptotic_context(three_roots, 2.0, 192)


@pytest.fixture
def write_config(tmp_path):
    """Write a config document to a temporary JSON file and return its path"""
    def _write(document, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document) if not isinstance(document, str) else document)
        return str(path)
    return _write


def close(a, b, tol=1e-25) -> bool:
    with mpmath.workprec(256):
        return abs(mpmath.mpmathify(a) - mpmath.mpmathify(b)) <= tol
