"""Tape-based reverse-mode autodiff in a few lines.

Build tensors, run ops under a Tape, call backward, read gradients.
"""

import numpy as np

from dualpath import Tape, Tensor, backward, ew_mul, matmul, sum_all, tanh

# A scalar chain: loss = sum(tanh(W x) * tanh(W x))
rng = np.random.default_rng(0)
w = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
x = Tensor(rng.uniform(-1, 1, (4, 1)))

with Tape() as tape:
    h = tanh(matmul(w, x))
    loss = sum_all(ew_mul(h, h))

print("loss value:", loss.item())
backward(loss, tape)
print("dL/dW:\n", w.grad)

# Gradients accumulate until you reset them.
backward(loss, tape)
print("after a second backward pass the gradient doubles:")
print(w.grad / 2.0, "\n(same as before)")
w.zero_grad()

# A tensor feeding two branches receives the sum of both branch gradients.
a = Tensor([1.0, 2.0], requires_grad=True)
b = Tensor([3.0, 4.0])
with Tape() as tape:
    branch1 = sum_all(ew_mul(a, b))     # d/da = b
    branch2 = sum_all(ew_mul(a, a))     # d/da = 2a
    loss = branch1 + branch2
backward(loss, tape)
print("two-branch gradient (b + 2a):", a.grad)

# Ops executed with no active tape still compute; they just record nothing.
print("inference product:", ew_mul(a, b).data)
