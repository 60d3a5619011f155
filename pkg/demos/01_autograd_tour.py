# coding: utf-8

# # A tiny autograd on top of numpy
#
# Everything in the package trains through `hypomimia.numerics`: a Tensor that
# remembers how it was made, and `backward()` that walks that record in reverse.
# This notebook pokes at it directly.

# In[1]:

import numpy as np

from hypomimia import numerics as nx
from hypomimia.layers import TransformerBlock
from hypomimia.numerics import Parameter, SeededRng, Tensor, gradient_check

# A Parameter always carries a gradient buffer of its own shape.

# In[2]:

w = Parameter(np.array([[1.0, -2.0], [0.5, 3.0]]), name="w")
x = np.array([[1.0], [2.0]])
loss = nx.tsum(nx.tanh(nx.matmul(w, x)))
loss.backward()
print("loss", loss.item())
print("dloss/dw\n", w.grad)

# The analytic gradient of tanh is 1 - tanh^2, so we can check one entry by hand.

# In[3]:

z = w.data @ x
manual = (1 - np.tanh(z) ** 2) @ x.T
print("max difference from hand derivation:", np.abs(manual - w.grad).max())

# Central differences give an independent opinion for any scalar loss.
# The returned number is the worst relative disagreement over every coordinate.

# In[4]:

rng = SeededRng(0)
block = TransformerBlock(8, 2, rng)
tokens = Tensor(rng.normal(size=(2, 5, 8)))
probe = rng.normal(size=(2, 5, 8))
err = gradient_check(lambda: nx.tsum(block(tokens) * probe), block.parameters(), 1e-5)
print(f"transformer block, worst relative error {err:.2e}")

# Numerical trouble is loud: any op that produces inf or nan raises immediately.

# In[5]:

try:
    nx.exp(Tensor(800.0))
except nx.NumericError as exc:
    print("caught:", exc)
