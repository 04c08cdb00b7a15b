import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_pinn.autodiff import (
    ArrayTape,
    SingularOperationError,
    Tape,
    TapeError,
    backward,
    input_tuple,
    taylor_affine,
    taylor_tanh,
    var,
)

mpmath.mp.dps = 40
TANH_HALF = float(mpmath.tanh(mpmath.mpf("0.5")))


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-12)


# -- tape construction ---------------------------------------------------------


def test_first_var_gets_id_zero():
    t = Tape()
    assert var(t, 3.0) == 0
    assert t.node(0).value == 3.0
    assert t.node(0).parents == ()


def test_ids_are_dense():
    t = Tape()
    assert [var(t, 1.0), var(t, 2.0)] == [0, 1]
    assert t.next_id == 2


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_var_rejected(bad):
    with pytest.raises(TapeError):
        var(Tape(), bad)


def test_unknown_operand_rejected():
    t = Tape()
    a = t.var(1.0)
    with pytest.raises(TapeError):
        t.add(a, 5)


def test_division_by_zero_is_singular():
    t = Tape()
    with pytest.raises(SingularOperationError):
        t.div(t.var(1.0), t.var(0.0))


def test_tanh_at_zero():
    t = Tape()
    y = t.tanh(t.var(0.0))
    assert t.value(y) == 0.0
    assert t.node(y).local_partials == (1.0,)


def test_mul_partials():
    t = Tape()
    y = t.mul(t.var(2.0), t.var(3.0))
    assert t.value(y) == 6.0
    assert t.node(y).local_partials == (3.0, 2.0)


def test_tanh_half_matches_high_precision():
    t = Tape()
    y = t.tanh(t.var(0.5))
    assert t.value(y) == pytest.approx(0.4621171573, abs=1e-10)
    assert rel_err(t.value(y), TANH_HALF) < 1e-15


def test_div_value_and_partials():
    t = Tape()
    y = t.div(t.var(3.0), t.var(4.0))
    assert t.value(y) == 0.75
    assert t.node(y).local_partials == pytest.approx((0.25, -3.0 / 16.0))


# -- backward ------------------------------------------------------------------


def test_square_adjoint():
    t = Tape()
    x = t.var(3.0)
    adj = backward(t, t.square(x))
    assert adj[x] == 6.0


def test_tanh_product_adjoint_against_central_difference():
    def f(w, x):
        return math.tanh(w * x)

    t = Tape()
    w, x = t.var(0.7), t.var(0.2)
    adj = backward(t, t.tanh(t.mul(w, x)))
    h = 1e-6
    fd = (f(0.7 + h, 0.2) - f(0.7 - h, 0.2)) / (2 * h)
    assert adj[w] == pytest.approx(0.1961, abs=5e-5)
    assert rel_err(adj[w], fd) < 1e-8


def test_unused_variable_has_zero_adjoint():
    t = Tape()
    x, unused = t.var(1.5), t.var(9.0)
    adj = backward(t, t.mul(x, x))
    assert adj[unused] == 0.0
    assert adj[-1] == 1.0


def test_backward_of_leaf_is_unit():
    t = Tape()
    x = t.var(2.0)
    assert backward(t, x) == [1.0]


OPS = ("add", "sub", "mul", "div", "tanh", "square", "scale", "shift", "neg")


def _build(program, inputs, record):
    """Replay a random program either on a Tape or on plain floats."""
    vals = list(inputs)
    for op, i, j, c in program:
        a, b = vals[i % len(vals)], vals[j % len(vals)]
        if op == "div":
            vals.append(record.div(a, b) if record.denominator_ok(b) else record.add(a, b))
        elif op in ("add", "sub", "mul"):
            vals.append(getattr(record, op)(a, b))
        elif op in ("scale", "shift"):
            vals.append(getattr(record, op)(a, c))
        else:
            vals.append(getattr(record, op)(a))
    return vals[-1]


class _TapeRec:
    def __init__(self, tape):
        self.t = tape

    def denominator_ok(self, b):
        return abs(self.t.value(b)) > 0.5

    def __getattr__(self, name):
        return getattr(self.t, name)


class _FloatRec:
    def denominator_ok(self, b):
        return abs(b) > 0.5

    add = staticmethod(lambda a, b: a + b)
    sub = staticmethod(lambda a, b: a - b)
    mul = staticmethod(lambda a, b: a * b)
    div = staticmethod(lambda a, b: a / b)
    tanh = staticmethod(math.tanh)
    square = staticmethod(lambda a: a * a)
    scale = staticmethod(lambda a, c: c * a)
    shift = staticmethod(lambda a, c: a + c)
    neg = staticmethod(lambda a: -a)


programs = st.lists(
    st.tuples(
        st.sampled_from(OPS),
        st.integers(0, 50),
        st.integers(0, 50),
        st.floats(-2.0, 2.0, allow_nan=False),
    ),
    min_size=1,
    max_size=25,
)


@settings(max_examples=60, deadline=None)
@given(programs, st.lists(st.floats(-2.0, 2.0, allow_nan=False), min_size=3, max_size=3))
def test_random_programs_match_central_differences(program, inputs):
    t = Tape()
    ids = [t.var(v) for v in inputs]
    out = _build(program, ids, _TapeRec(t))
    adj = t.backward(out)
    for k, i in enumerate(ids):
        h = 1e-6
        up = list(inputs)
        dn = list(inputs)
        up[k] += h
        dn[k] -= h
        try:
            fu = _build(program, up, _FloatRec())
            fd_ = _build(program, dn, _FloatRec())
        except ZeroDivisionError:
            continue
        # perturbation flipped a division guard: the two sides trace different programs
        tu, td = Tape(), Tape()
        if _branches(program, up, tu) != _branches(program, inputs, Tape()) or _branches(
            program, dn, td
        ) != _branches(program, inputs, Tape()):
            continue
        fd = (fu - fd_) / (2 * h)
        scale = max(1.0, abs(fd), abs(adj[i]))
        assert abs(adj[i] - fd) / scale < 1e-5


def _branches(program, inputs, tape):
    rec = _TapeRec(tape)
    vals = [tape.var(v) for v in inputs]
    taken = []
    for op, i, j, c in program:
        a, b = vals[i % len(vals)], vals[j % len(vals)]
        if op == "div":
            ok = rec.denominator_ok(b)
            taken.append(ok)
            vals.append(tape.div(a, b) if ok else tape.add(a, b))
        elif op in ("add", "sub", "mul"):
            vals.append(getattr(tape, op)(a, b))
        elif op in ("scale", "shift"):
            vals.append(getattr(tape, op)(a, c))
        else:
            vals.append(getattr(tape, op)(a))
    return taken


@settings(max_examples=30, deadline=None)
@given(programs)
def test_parents_precede_children(program):
    t = Tape()
    ids = [t.var(0.3), t.var(-0.4), t.var(1.1)]
    _build(program, ids, _TapeRec(t))
    for k, node in enumerate(t.nodes):
        assert all(p < k for p in node.parents)
        assert len(node.parents) == len(node.local_partials) <= 2
        assert all(math.isfinite(d) for d in node.local_partials)


def test_identical_programs_give_bitwise_identical_adjoints():
    def run():
        t = Tape()
        a, b = t.var(0.31), t.var(-1.7)
        y = t.tanh(t.add(t.mul(a, b), t.square(t.div(a, b))))
        return t.backward(y)

    assert run() == run()


def test_clear_resets_ids():
    t = Tape()
    t.var(1.0)
    t.clear()
    assert t.var(2.0) == 0


# -- Taylor propagation ----------------------------------------------------------


def test_affine_single_input():
    t = Tape()
    x = input_tuple(t, 0.3, "x")
    z = taylor_affine([x], [t.var(2.0)], t.var(1.0))
    assert z.values() == pytest.approx((1.6, 2.0, 0.0, 0.0, 0.0))


def test_affine_zero_weights_is_constant():
    t = Tape()
    ins = [input_tuple(t, 0.3, "x"), input_tuple(t, 0.8, "y")]
    z = taylor_affine(ins, [t.var(0.0), t.var(0.0)], t.var(-0.25))
    assert z.values() == (-0.25, 0.0, 0.0, 0.0, 0.0)


def test_affine_length_mismatch():
    t = Tape()
    with pytest.raises(ValueError):
        taylor_affine([input_tuple(t, 0.1, "x")], [t.var(1.0), t.var(2.0)], t.var(0.0))


def test_affine_rejects_mixed_tapes():
    t1, t2 = Tape(), Tape()
    with pytest.raises(ValueError):
        taylor_affine([input_tuple(t1, 0.1, "x"), input_tuple(t2, 0.2, "y")], [t1.var(1.0), t1.var(1.0)], t1.var(0.0))


def _composed(x, y):
    # two hidden tanh units feeding an affine output; the oracle for the two-input affine case
    h1 = math.tanh(0.4 * x - 0.9 * y + 0.1)
    h2 = math.tanh(-1.3 * x + 0.2 * y)
    return 0.7 * h1 - 1.1 * h2 + 0.05


def _taylor_composed(x, y):
    t = Tape()
    ins = [input_tuple(t, x, "x"), input_tuple(t, y, "y")]
    h1 = taylor_tanh(taylor_affine(ins, [t.var(0.4), t.var(-0.9)], t.var(0.1)))
    h2 = taylor_tanh(taylor_affine(ins, [t.var(-1.3), t.var(0.2)], t.var(0.0)))
    return taylor_affine([h1, h2], [t.var(0.7), t.var(-1.1)], t.var(0.05)).values()


def test_affine_of_two_tuples_matches_finite_differences():
    x, y, h = 0.37, 0.61, 1e-4
    val, dx, dy, dxx, dyy = _taylor_composed(x, y)
    f = _composed
    assert val == pytest.approx(f(x, y), rel=1e-15)
    assert rel_err(dx, (f(x + h, y) - f(x - h, y)) / (2 * h)) < 1e-7
    assert rel_err(dy, (f(x, y + h) - f(x, y - h)) / (2 * h)) < 1e-7
    assert rel_err(dxx, (f(x + h, y) - 2 * f(x, y) + f(x - h, y)) / h**2) < 1e-5
    assert rel_err(dyy, (f(x, y + h) - 2 * f(x, y) + f(x, y - h)) / h**2) < 1e-5


def test_tanh_tuple_at_zero():
    t = Tape()
    z = input_tuple(t, 0.0, "x")
    assert taylor_tanh(z).values() == (0.0, 1.0, 0.0, 0.0, 0.0)


def test_tanh_tuple_scaled_input():
    t = Tape()
    x = input_tuple(t, 0.25, "x")
    z = taylor_affine([x], [t.var(2.0)], t.var(0.0))  # (0.5, 2, 0, 0, 0)
    val, dx, dy, dxx, dyy = taylor_tanh(z).values()
    assert val == pytest.approx(0.4621171573, abs=1e-10)
    assert dx == pytest.approx(1.5728955, abs=1e-7)
    assert rel_err(dx, 2 * (1 - TANH_HALF**2)) < 1e-14
    # second-order slot: -2 a s dx^2
    assert rel_err(dxx, -2 * TANH_HALF * (1 - TANH_HALF**2) * 4) < 1e-14
    assert (dy, dyy) == (0.0, 0.0)


def test_tanh_tuple_constant_input():
    t = Tape()
    c = input_tuple(t, 1.3, "const")
    val, *rest = taylor_tanh(c).values()
    assert val == math.tanh(1.3)
    assert rest == [0.0, 0.0, 0.0, 0.0]


def test_parameter_gradient_of_squared_curvature():
    """d/dw of (f_xx)^2 through the Taylor slots, against finite differences in w."""
    w0 = [0.4, -0.9, 0.1, -1.3, 0.2, 0.0, 0.7, -1.1, 0.05]
    x, y = 0.37, 0.61

    def record(w):
        t = Tape()
        ids = [t.var(v) for v in w]
        ins = [input_tuple(t, x, "x"), input_tuple(t, y, "y")]
        h1 = taylor_tanh(taylor_affine(ins, ids[0:2], ids[2]))
        h2 = taylor_tanh(taylor_affine(ins, ids[3:5], ids[5]))
        out = taylor_affine([h1, h2], ids[6:8], ids[8])
        return t, ids, t.square(out.dxx)

    t, ids, loss = record(w0)
    adj = t.backward(loss)
    for k in range(len(w0)):
        h = 1e-6
        wp, wm = list(w0), list(w0)
        wp[k] += h
        wm[k] -= h
        tp, _, lp = record(wp)
        tm, _, lm = record(wm)
        fd = (tp.value(lp) - tm.value(lm)) / (2 * h)
        assert abs(adj[ids[k]] - fd) <= 1e-4 * max(abs(fd), 1e-3)


# -- batched tape ------------------------------------------------------------------


def test_array_tape_broadcast_gradients():
    rng = np.random.default_rng(3)
    a0 = rng.normal(size=(4, 3))
    b0 = rng.normal(size=(1, 3))

    def f(a, b):
        return float(np.sum(np.tanh(a * b + a) ** 2))

    t = ArrayTape()
    a, b = t.var(a0), t.var(b0)
    out = t.sum(t.square(t.tanh(t.add(t.mul(a, b), a))))
    ga, gb = t.grad(out, [a, b])
    h = 1e-6
    for arr, g in ((a0, ga), (b0, gb)):
        for idx in np.ndindex(arr.shape):
            arr[idx] += h
            up = f(a0, b0)
            arr[idx] -= 2 * h
            dn = f(a0, b0)
            arr[idx] += h
            assert g[idx] == pytest.approx((up - dn) / (2 * h), rel=1e-6, abs=1e-9)


def test_array_tape_rejects_non_finite():
    with pytest.raises(ValueError):
        ArrayTape().var([1.0, np.nan])


def test_stacked_layers_match_scalar_taylor():
    rng = np.random.default_rng(11)
    w1, b1 = rng.normal(size=(2, 3)), rng.normal(size=3)
    w2 = rng.normal(size=(3, 1))
    pts = rng.uniform(size=(5, 2))

    t = ArrayTape()
    z0 = np.zeros((5, 5, 2))
    z0[0] = pts
    z0[1, :, 0] = 1.0
    z0[2, :, 1] = 1.0
    h = t.stacked_tanh(t.stacked_dense(t.var(z0), t.var(w1), t.var(b1)))
    out = t.stacked_dense(h, t.var(w2), t.var(np.zeros(1)))
    slots = [t.value(t.slot(out, k)) for k in range(5)]

    for n, (x, y) in enumerate(pts):
        s = Tape()
        ins = [input_tuple(s, x, "x"), input_tuple(s, y, "y")]
        hid = [
            taylor_tanh(taylor_affine(ins, [s.var(w1[0, j]), s.var(w1[1, j])], s.var(b1[j])))
            for j in range(3)
        ]
        ref = taylor_affine(hid, [s.var(w2[j, 0]) for j in range(3)], s.var(0.0)).values()
        for k in range(5):
            assert slots[k][n] == pytest.approx(ref[k], rel=1e-12, abs=1e-14)


def test_stacked_tanh_vjp_matches_finite_differences():
    rng = np.random.default_rng(5)
    z0 = rng.normal(size=(5, 4, 3))
    g = rng.normal(size=(5, 4, 3))

    def f(z):
        t = ArrayTape()
        return float(np.sum(t.value(t.stacked_tanh(t.var(z))) * g))

    t = ArrayTape()
    zi = t.var(z0)
    out = t.stacked_tanh(zi)
    loss = t.sum(t.mul(out, t.const(g)))
    (gz,) = t.grad(loss, [zi])
    h = 1e-6
    for idx in np.ndindex(z0.shape):
        z0[idx] += h
        up = f(z0)
        z0[idx] -= 2 * h
        dn = f(z0)
        z0[idx] += h
        assert gz[idx] == pytest.approx((up - dn) / (2 * h), rel=1e-6, abs=1e-8)
