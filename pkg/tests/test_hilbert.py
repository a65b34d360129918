import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavbus.hilbert import (
    BasisError,
    charge_product,
    creation,
    embed,
    enumerate_basis,
    exchange,
    hop,
    is_hermitian,
    ladder,
    manifold_projector,
    monomial,
    number,
    total_number,
)


def comm(A, B):
    return A @ B - B @ A


def test_single_excitation_manifold():
    b = enumerate_basis((2, 2, 2), manifold=1)
    assert b.labels.tolist() == [[0, 0, 1], [0, 1, 0], [1, 0, 0]]
    assert b.dim == 3


def test_two_qubit_register_sizes():
    assert enumerate_basis((3,) * 5, n_max=2).dim == 21
    sizes = [enumerate_basis((3,) * 5, manifold=n).dim for n in range(3)]
    assert sizes == [1, 5, 15]
    assert enumerate_basis((3,) * 5).dim == 243


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=1, max_size=5), st.integers(0, 6))
def test_manifold_matches_brute_force(levels, N):
    brute = [lab for lab in itertools.product(*(range(L) for L in levels)) if sum(lab) == N]
    if not brute:
        with pytest.raises(BasisError):
            enumerate_basis(levels, manifold=N)
        return
    b = enumerate_basis(levels, manifold=N)
    assert [tuple(x) for x in b.labels.tolist()] == brute


def test_basis_order_is_deterministic():
    a = enumerate_basis((3, 3, 4, 3, 3), n_max=2, names=list("abcde"))
    b = enumerate_basis((3, 3, 4, 3, 3), n_max=2, names=list("abcde"))
    assert a.dumps() == b.dumps()


def test_basis_errors():
    with pytest.raises(BasisError):
        enumerate_basis((1, 3))
    with pytest.raises(BasisError):
        enumerate_basis((3, 3), manifold=1, n_max=2)
    with pytest.raises(BasisError):
        enumerate_basis((2, 2), manifold=5)
    with pytest.raises(BasisError):
        enumerate_basis((3,), names=["x"]).mode("y")


def test_single_mode_ladder():
    b = enumerate_basis((3,))
    a = ladder(0, b)
    assert np.allclose(a, [[0, 1, 0], [0, 0, np.sqrt(2)], [0, 0, 0]])
    assert np.allclose(a.T @ a, np.diag([0, 1, 2]))
    assert np.allclose(creation(0, b), a.T)


def test_lowering_leaves_manifold():
    b = enumerate_basis((3, 3, 3), manifold=1)
    assert np.count_nonzero(ladder(1, b)) == 0


def test_commutators_on_full_product_space():
    b = enumerate_basis((4, 3, 3))
    a0, a1 = ladder(0, b), ladder(1, b)
    assert np.max(np.abs(comm(a0, a1.T))) < 1e-12
    assert np.max(np.abs(comm(a0, a1))) < 1e-12
    # [a, a^dag] = 1 below the truncation ceiling of the mode
    c = comm(a0, a0.T)
    below = b.labels[:, 0] < 3
    assert np.allclose(np.diag(c)[below], 1.0)


def test_number_operators_commute_with_projector():
    b = enumerate_basis((3, 3, 3), n_max=3)
    Nt = total_number(b)
    for n in range(4):
        assert np.max(np.abs(comm(Nt, manifold_projector(b, n)))) == 0.0
    assert np.allclose(Nt, sum(number(k, b) for k in range(3)))


def test_embed_matches_ladder():
    b = enumerate_basis((3, 4, 3))
    single = np.diag(np.sqrt(np.arange(1, 4)), 1)
    assert np.allclose(embed(single, 1, b), ladder(1, b))
    with pytest.raises(BasisError):
        embed(np.eye(3), 1, b)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=2, max_size=4), st.data())
def test_restricted_products_equal_projected_full_products(levels, data):
    full = enumerate_basis(levels)
    n = len(levels)
    m = data.draw(st.integers(0, n - 1))
    k = data.draw(st.integers(0, n - 1).filter(lambda x: x != m))
    N = data.draw(st.integers(0, sum(L - 1 for L in levels)))
    sub = enumerate_basis(levels, manifold=N)
    idx = [full.index(lab) for lab in sub.labels]
    X_full = hop(m, k, full)
    assert np.allclose(hop(m, k, sub), X_full[np.ix_(idx, idx)])


def test_exchange_and_charge_product_are_hermitian():
    b = enumerate_basis((3, 3, 3))
    assert is_hermitian(exchange(0, 2, b))
    assert is_hermitian(charge_product(0, 2, b))
    with pytest.raises(BasisError):
        charge_product(1, 1, b)


def test_monomial_order_annihilators_first():
    b = enumerate_basis((3,))
    # a^dag a on |1> is 1, a a^dag would give 2
    assert monomial(b, create=[0], annihilate=[0])[1, 1] == pytest.approx(1.0)
