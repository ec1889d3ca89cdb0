"""A walk through the Wilson Haar system on small grids.

Prints the laminar child-union pairs in two dimensions, the weighted Haar
function of a two-cell weight, and the disbalanced decomposition that
rewrites an unweighted Haar function in the weighted system.
"""
import numpy as np

from haarlab import Cube, GridSpec, StepFunction, build_wilson_sets, disbalanced_coeffs, haar_function, haar_matrix

# In d = 2 a cube has four children and three Haar directions. Each direction
# splits a union of children into two equal halves; the splits are nested.
g2 = GridSpec(2, 1)
print("d=2 splits of the unit square (child offsets as bit strings):")
for s in build_wilson_sets(g2, Cube.root(2)):
    e1, e2 = s.bitstrings()
    print(f"  alpha={s.alpha}: {e1} | {e2}   |E| = {s.measure}")

# a two-cell weight on [0,1)
g1 = GridSpec(1, 1)
w = StepFunction(g1, np.array([4.0, 1.0]))
h = haar_function(g1, Cube.root(1), 1)
hw = haar_function(g1, Cube.root(1), 1, w)
print("\nunweighted h on the two halves:", h.cells)
print("weighted h^w on the two halves:", np.round(hw.cells, 6))
print("  integral of h^w * w   =", float(np.dot(hw.cells, w.cells) * g1.cell_measure))
print("  integral of h^w^2 * w =", float(np.dot(hw.cells**2, w.cells) * g1.cell_measure))

c = disbalanced_coeffs(w, Cube.root(1), 1)
print(f"\nh = C h^w + D 1_E/|E| with C = {c.C:.6f} (sqrt 1.6 = {np.sqrt(1.6):.6f}), D = {c.D:.6f}")
print("  rebuilt:", np.round(c.C * hw.cells + c.D * np.ones(2), 12))

# Gram matrix of the weighted system for a rough weight on a 3-level planar grid
g = GridSpec(2, 3)
rng = np.random.default_rng(0)
rough = StepFunction(g, np.exp(rng.normal(0, 2, g.n_cells)))
H = haar_matrix(g, rough)
G = (H * (rough.cells * g.cell_measure)) @ H.T
print(f"\n{len(G)} weighted Haar functions on a {g.n_cells}-cell grid;",
      f"max |Gram - I| in L2(w) = {np.max(np.abs(G - np.eye(len(G)))):.2e}")
