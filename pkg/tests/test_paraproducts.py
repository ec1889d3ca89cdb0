import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from haarlab.checks import make_case, multiplication_error, nine_term_error, product_formula_error
from haarlab.grid import Cube, GridError, GridSpec, StepFunction, WeightError, analyze, all_cubes
from haarlab.operators import MaterializeError, identity_operator, materialize
from haarlab.paraproducts import (
    KINDS,
    NINE_LABELS,
    SymbolSequence,
    apply_multiplier,
    apply_paraproduct,
    build_nine_term_resolution,
    decompose_multiplication,
    multiplication_pieces,
    multiplier_operator,
    paraproduct_operator,
    product_formula_coefficient,
    q_name,
    read_symbol,
    write_symbol,
)
from haarlab.wilson import build_wilson_sets, haar_function

from conftest import random_step


def random_symbol(grid, seed):
    rng = np.random.default_rng(seed)
    return SymbolSequence(grid, [rng.uniform(-2, 2, (grid.n_cubes(l), grid.n_alpha)) for l in grid.levels()])


@pytest.mark.parametrize("kind", KINDS)
def test_zero_symbol(kind):
    g = GridSpec(2, 2)
    out = apply_paraproduct(kind, SymbolSequence.zeros(g), random_step(g, 0))
    assert np.all(out.cells == 0)


def test_p00_identity_on_mean_zero():
    g = GridSpec(2, 3)
    f = random_step(g, 1)
    f0 = f - f.mean()
    out = apply_paraproduct((0, 0), SymbolSequence.constant(g, 1.0), f0)
    assert np.max(np.abs(out.cells - f0.cells)) <= 1e-12


def test_p01_hand():
    g = GridSpec(1, 1)
    f = StepFunction(g, np.array([1.0, 3.0]))
    out = apply_paraproduct((0, 1), SymbolSequence.constant(g, 1.0), f)
    assert out.cells == pytest.approx([-2.0, 2.0])


def test_multiplier_examples():
    g = GridSpec(1, 1)
    f = StepFunction(g, np.array([1.0, 3.0]))
    assert apply_multiplier(SymbolSequence.constant(g, -1.0), f).cells == pytest.approx([1.0, -1.0])
    g3 = GridSpec(2, 3)
    h = random_step(g3, 2)
    out = apply_multiplier(SymbolSequence.constant(g3, 1.0), h)
    assert np.max(np.abs(out.cells - (h.cells - h.mean()))) <= 1e-12
    assert abs(out.mean()) <= 1e-14


def test_multiplier_annihilates_constants():
    g = GridSpec(2, 2)
    out = apply_multiplier(random_symbol(g, 3), StepFunction.constant(g, 5.0))
    assert np.max(np.abs(out.cells)) <= 1e-13


def test_grid_mismatch():
    with pytest.raises(GridError, match="grid mismatch"):
        apply_multiplier(SymbolSequence.constant(GridSpec(1, 2), 1.0), StepFunction.constant(GridSpec(1, 3), 1.0))


@given(seed=st.integers(0, 10**6), kind=st.sampled_from([(0, 1), (1, 0), (0, 0)]))
@settings(max_examples=40, deadline=None)
def test_adjoint_pairs(seed, kind):
    g = GridSpec(2, 3)
    a = random_symbol(g, seed)
    f, h = random_step(g, seed + 1), random_step(g, seed + 2)
    adj = {(0, 1): (1, 0), (1, 0): (0, 1), (0, 0): (0, 0)}[kind]
    lhs = np.dot(apply_paraproduct(kind, a, f).cells, h.cells)
    rhs = np.dot(f.cells, apply_paraproduct(adj, a, h).cells)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    op = paraproduct_operator(kind, a)
    assert abs(np.dot(op.apply(f.cells), h.cells) - np.dot(f.cells, op.apply_adjoint(h.cells))) <= 1e-10 * max(1.0, abs(lhs))


def test_materialized_transposes():
    g = GridSpec(1, 4)
    a = random_symbol(g, 5)
    P01 = materialize(paraproduct_operator((0, 1), a))
    P10 = materialize(paraproduct_operator((1, 0), a))
    assert np.max(np.abs(P01 - P10.T)) <= 1e-12


def test_materialize_identity_and_cap():
    g = GridSpec(2, 2)
    assert np.array_equal(materialize(identity_operator(g)), np.eye(16))
    with pytest.raises(MaterializeError, match="matrix-free"):
        materialize(identity_operator(GridSpec(1, 13)))


def test_multiplier_diagonal_in_haar_basis():
    g = GridSpec(2, 2)
    sig = random_symbol(g, 6)
    M = materialize(multiplier_operator(sig), basis="haar")
    want = np.concatenate([[0.0]] + [v.ravel() for v in sig.values])
    assert np.max(np.abs(M - np.diag(want))) <= 1e-12


def test_multiplier_norm_bound_and_witness():
    g = GridSpec(1, 5)
    sig = random_symbol(g, 7)
    f = random_step(g, 8)
    assert apply_multiplier(sig, f).norm() <= sig.sup_norm * f.norm() * (1 + 1e-12)
    l, m, a = max(((l, *np.unravel_index(np.argmax(np.abs(v)), v.shape)) for l, v in enumerate(sig.values)),
                  key=lambda t: abs(sig.values[t[0]][t[1], t[2]]))
    h = haar_function(g, Cube.from_index(1, l, m), a + 1)
    assert apply_multiplier(sig, h).norm() == pytest.approx(sig.sup_norm, rel=1e-12)


def test_multiplication_constant_g():
    g = GridSpec(2, 2)
    f = random_step(g, 9)
    parts = multiplication_pieces(StepFunction.constant(g, 1.0), f)
    assert np.all(parts["mean"].cells == pytest.approx(f.mean()))
    para = parts[(0, 0)] + parts[(0, 1)] + parts[(1, 0)]
    assert np.max(np.abs(para.cells - (f.cells - f.mean()))) <= 1e-12


def test_multiplication_constant_f():
    g = GridSpec(2, 2)
    gg = random_step(g, 10)
    parts = multiplication_pieces(gg, StepFunction.constant(g, 1.0))
    assert np.max(np.abs(parts[(0, 1)].cells - (gg.cells - gg.mean()))) <= 1e-12
    assert np.max(np.abs(parts[(0, 0)].cells)) <= 1e-13
    assert np.max(np.abs(parts[(1, 0)].cells)) <= 1e-13
    assert parts["mean"].cells[0] == pytest.approx(gg.mean())


@pytest.mark.parametrize("seed", range(5))
def test_multiplication_identity(seed):
    assert multiplication_error(make_case(2, seed, L=3)) <= 1e-10


def test_decompose_symbols():
    g = GridSpec(1, 1)
    avg, hat = decompose_multiplication(StepFunction(g, np.array([4.0, 1.0])))
    assert avg[Cube.root(1), 1] == 2.5
    assert hat[Cube.root(1), 1] == pytest.approx(-1.5)


def test_product_formula_exhaustive():
    g = GridSpec(2, 3)
    f, h = random_step(g, 11), random_step(g, 12)
    want = analyze(f * h)
    for l in g.levels():
        for cube in all_cubes(g, l):
            for a in range(1, g.n_alpha + 1):
                got = product_formula_coefficient(f, h, cube, a)
                assert got == pytest.approx(want.coeff(cube, a), abs=1e-10)


def test_product_formula_with_constant():
    g = GridSpec(1, 3)
    h = random_step(g, 13)
    one = StepFunction.constant(g, 1.0)
    c = Cube(1, (1,))
    assert product_formula_coefficient(one, h, c, 1) == pytest.approx(analyze(h).coeff(c, 1), abs=1e-13)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_product_formula_vectorized(d):
    for s in range(4):
        assert product_formula_error(make_case(d, s)) <= 1e-10


def test_nine_labels_order():
    assert [q_name(k) for k in NINE_LABELS][:3] == ["q_01_01", "q_01_10", "q_01_00"]
    assert len(set(NINE_LABELS)) == 9


def test_nine_term_constant_weight():
    g = GridSpec(1, 3)
    res = build_nine_term_resolution(SymbolSequence.constant(g, 1.0), StepFunction.constant(g, 1.0))
    f = random_step(g, 14)
    for name, op in res.named().items():
        out = op.apply(f.cells)
        if name == "q_00_00":
            assert np.max(np.abs(out - (f.cells - f.mean()))) <= 1e-12
        else:
            assert np.max(np.abs(out)) <= 1e-13


def test_nine_term_hand(w41):
    g = w41.grid
    res = build_nine_term_resolution(SymbolSequence.constant(g, 1.0), w41)
    f = np.array([2.0, 2.0])
    assert res.conjugated.apply(f) == pytest.approx([-1.0, 0.5])
    assert res.total().apply(f) == pytest.approx([-1.0, 0.5], abs=1e-12)


def test_nine_term_rejects_nonpositive():
    g = GridSpec(1, 1)
    with pytest.raises(WeightError):
        build_nine_term_resolution(SymbolSequence.constant(g, 1.0), StepFunction(g, np.array([1.0, 0.0])))


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_nine_term_adjoints_dense(L):
    case = make_case(1, 20 + L, L=L)
    res = build_nine_term_resolution(case.sigma, case.w)
    for op in list(res.terms.values()) + [res.conjugated]:
        A = materialize(op)
        At = materialize(op.T)
        assert np.max(np.abs(A.T - At)) <= 1e-10 * max(1.0, np.max(np.abs(A)))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_nine_term_exactness(d):
    for s in range(6):
        assert nine_term_error(make_case(d, 100 + s)) <= 1e-10


def test_symbol_file_roundtrip(tmp_path):
    g = GridSpec(2, 2)
    sig = random_symbol(g, 15)
    p = tmp_path / "s.txt"
    write_symbol(sig, p)
    back = read_symbol(p)
    assert all(np.array_equal(a, b) for a, b in zip(back.values, sig.values))
    p.write_text("constant -1\n")
    c = read_symbol(p, g)
    assert c.sup_norm == 1.0 and c[Cube.root(2), 3] == -1.0
    with pytest.raises(GridError):
        read_symbol(p)


def test_symbol_file_out_of_range(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("1 2\n2 0 1 1.0\n")
    with pytest.raises(GridError, match="out of range"):
        read_symbol(p)


def test_random_signs_reproducible():
    g = GridSpec(1, 6)
    a, b = SymbolSequence.random_signs(g, 3), SymbolSequence.random_signs(g, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.values, b.values))
    assert set(np.concatenate([v.ravel() for v in a.values])) == {-1.0, 1.0}
