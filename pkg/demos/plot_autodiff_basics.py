"""
Reverse-mode gradients, by hand and by the engine
=================================================

A short tour of the tensor engine that the network is built on: a dot
product, a 3D convolution checked against finite differences, and the
stop-gradient operator that keeps the siamese loss from collapsing.
"""

import numpy as np

from hacd import autodiff as ad
from hacd.autodiff import Tensor
from hacd.autodiff.gradcheck import max_relative_error, numerical_grad

rng = np.random.default_rng(0)

# d(sum(a * b))/da is just b
a = Tensor(rng.standard_normal(4), requires_grad=True)
b = Tensor(rng.standard_normal(4))
(a * b).sum().backward()
print("grad matches b:", np.allclose(a.grad, b.data))

###############################################################################
# A 3D convolution
# ----------------
# Input layout is [N, C, D, H, W]; here D plays the role of the spectral axis.

x = rng.standard_normal((1, 1, 6, 5, 5))
w = Tensor(rng.standard_normal((2, 1, 3, 3, 3)), requires_grad=True)
out = ad.conv3d(Tensor(x), w, (1, 1, 1), (1, 1, 1))
print("conv output", out.shape)
out.sum().backward()


def loss():
    return float(ad.conv3d(Tensor(x), Tensor(probe), (1, 1, 1), (1, 1, 1)).data.sum())


probe = w.data.copy()
num = numerical_grad(loss, probe)
print("max relative error vs central differences:", max_relative_error(w.grad, num))

###############################################################################
# Stop-gradient
# -------------
# Forward it is the identity; backward nothing flows through it.

t = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
(t * ad.stop_gradient(t)).sum().backward()
print("grad of sum(t * sg(t)) is t, not 2t:", t.grad)
