"""Central finite-difference gradient oracle shared across test modules.

All checks run in float64: with h = 1e-4 the truncation plus cancellation
error sits near 1e-10, far below the 1e-4 relative / 1e-6 absolute gate.
"""

import numpy as np

from geofield import engine


def numeric_grad(f, x, h=1e-4):
    """Central-difference gradient of scalar f at x, elementwise."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def check_grads(build, inputs, rtol=1e-4, atol=1e-6, h=1e-4):
    """Compare tape gradients of build(*leaves) -> scalar Var against the oracle.

    build must be a pure function of its Var arguments; inputs are arrays.
    """
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    tape = engine.Tape()
    leaves = [tape.leaf(x) for x in inputs]
    loss = build(*leaves)
    engine.backward(loss)

    for k in range(len(inputs)):
        def f(xk, k=k):
            vals = list(inputs)
            vals[k] = xk
            t = engine.Tape()
            return float(build(*[t.leaf(v) for v in vals]).value)

        num = numeric_grad(f, inputs[k], h=h)
        np.testing.assert_allclose(
            leaves[k].grad, num, rtol=rtol, atol=atol,
            err_msg=f"gradient mismatch on input {k}",
        )
    return [lf.grad for lf in leaves]
