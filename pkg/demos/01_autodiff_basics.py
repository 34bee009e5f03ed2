"""
A quick tour of the array autodiff core
=======================================

Build a small computation graph on float64 numpy arrays, run reverse-mode
backprop, and confirm a couple of gradients against central finite
differences.
"""

import numpy as np

from ltcalib.tensor import Tensor, log_softmax, relu, softmax

rng = np.random.default_rng(0)

# scalar chain rule: d/dx sum((x*x + 3x)) = 2x + 3
x = Tensor(rng.standard_normal(5), requires_grad=True)
(x * x + 3.0 * x).sum().backward()
print("analytic grad:", x.grad)
print("expected     :", 2 * x.values + 3)

# a 2-layer MLP head with a soft cross-entropy on top
w1 = Tensor(rng.standard_normal((3, 8)) * 0.5, requires_grad=True)
w2 = Tensor(rng.standard_normal((8, 4)) * 0.5, requires_grad=True)
inputs = rng.standard_normal((6, 3))
targets = np.full((6, 4), 0.25)


def loss_fn():
    h = relu(Tensor(inputs) @ w1)
    return -(Tensor(targets) * log_softmax(h @ w2)).sum()


loss = loss_fn()
loss.backward()
print(f"\nloss = {loss.values.item():.4f}")

# spot-check one weight entry with central differences
h = 1e-6
w1.values[0, 0] += h
up = loss_fn().values.item()
w1.values[0, 0] -= 2 * h
down = loss_fn().values.item()
w1.values[0, 0] += h
print(f"dL/dw1[0,0]: analytic {w1.grad[0, 0]:.8f}  numeric {(up - down) / (2 * h):.8f}")

# softmax rows always sum to one, regardless of logit scale
z = Tensor(rng.standard_normal((2, 4)) * 10)
print("\nsoftmax row sums:", softmax(z).values.sum(axis=1))
