"""
Checking backpropagation numerically
====================================

Central differences on the full loss, for single layers and for the
whole network.
"""

import numpy as np

from ridecnn.model import build_model
from ridecnn.nn import conv2d_backward, conv2d_forward, gradient_check

rng = np.random.default_rng(0)

# a single convolution: d/dx of sum(w * conv(x)) at one input pixel
x = rng.normal(size=(2, 5, 5))
k, b = rng.normal(size=(3, 2, 3, 3)), np.zeros(3)
w = rng.normal(size=(3, 5, 5))
gx, _, _ = conv2d_backward(w, x, k)
eps = 1e-5
x[1, 2, 3] += eps
plus = np.sum(w * conv2d_forward(x, k, b))
x[1, 2, 3] -= 2 * eps
minus = np.sum(w * conv2d_forward(x, k, b))
print("analytic", gx[1, 2, 3], "numeric", (plus - minus) / (2 * eps))

# the full network; parameters whose perturbation flips a ReLU or pooling
# choice are skipped because the loss has a kink there
network = build_model(seed=7)
sample = rng.uniform(size=network.input_shape)
target = rng.poisson(3.0, network.output_shape).astype(float)
result = gradient_check(network, sample, target, n_params=200, seed=7)
print(f"max relative error {result.max_rel_error:.2e} over {result.checked} parameters, "
      f"{result.excluded} skipped")
