"""Tour of the tape-based reverse-mode engine behind the model: record a small
computation, replay it backwards, and compare analytic gradients against
central finite differences. Run from the repo root:

    python3 demos/demo_autodiff.py
"""

import numpy as np

from mygo import autodiff as ad
from mygo.autodiff import Tape, Tensor


def main():
    # forward pass under a tape records one step per primitive op
    x = Tensor(np.array([[1.0, -2.0], [0.5, 3.0]]), requires_grad=True)
    w = Tensor(np.array([[0.3, -0.1], [0.2, 0.4]]), requires_grad=True)
    with Tape() as tape:
        h = ad.relu(ad.matmul(x, w))
        loss = ad.scale(ad.sum_all(ad.mul(h, h)), 1.0 / h.data.size)
        tape.backward(loss)
    print(f"tape recorded {len(tape._steps)} primitive steps")
    print("loss value        ", float(loss.data))
    print("dloss/dx\n", x.grad)
    print("dloss/dw\n", w.grad)
    print()

    # the same gradients by central differences, coordinate by coordinate
    def loss_at(x_vals, w_vals):
        hv = np.maximum(x_vals @ w_vals, 0.0)
        return float((hv * hv).mean())

    h_step = 1e-6
    fd = np.zeros_like(w.data)
    for i in range(w.data.shape[0]):
        for j in range(w.data.shape[1]):
            up = w.data.copy()
            dn = w.data.copy()
            up[i, j] += h_step
            dn[i, j] -= h_step
            fd[i, j] = (loss_at(x.data, up) - loss_at(x.data, dn)) / (2 * h_step)
    print("finite-difference dloss/dw\n", fd)
    print("max |analytic - fd| =", np.abs(w.grad - fd).max())
    print()

    # grad_check automates exactly that comparison for whole parameter groups,
    # in float64, and refuses to run if two forward passes disagree
    params = [
        Tensor(np.array([[0.3, -0.1], [0.2, 0.4]]), requires_grad=True,
               name="w"),
        Tensor(np.array([0.05, -0.02]), requires_grad=True, name="b"),
    ]

    def forward():
        hid = ad.relu(ad.add(ad.matmul(Tensor(x.data), params[0]),
                             params[1]))
        return ad.scale(ad.sum_all(ad.mul(hid, hid)), 0.25)

    total, per_param = ad.grad_check(forward, params)
    for name, err in per_param.items():
        print(f"grad_check {name:4s} max rel err {err:.3e}")
    print(f"grad_check max rel err over all groups {total:.3e}")

    # the full model goes through the same audit via the command line:
    #     mygo gradcheck --out /tmp/gradcheck
    # which checks all 41 parameter groups of the two-encoder scorer


if __name__ == "__main__":
    main()
