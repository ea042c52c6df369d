# %% [markdown]
# # Two ways to update the subspaces
#
# With the embedding held fixed, the subspaces can be refitted in closed form
# (one SVD per cluster) or moved by small Riemannian steps on the Grassmann
# manifold using mini-batch gradients. This script compares the two on the
# same synthetic data and the same starting bases.
#
# Run with `python notebooks/02_grassmann_vs_svd.py`.

# %%
import numpy as np

from deepksc.data import SynthSpec, gen_synth
from deepksc.grassmann import retract, tangent_project
from deepksc.ksc import KscConfig, run_plain_ksc
from deepksc.metrics import acc
from deepksc.trainer import run_grassmann_ksc

points, truth, true_subs = gen_synth(SynthSpec(k=4, d=15, p=2, points_per_cluster=150, noise_sigma=0.02, seed=7))

rng = np.random.default_rng(0)
init = []
for s in true_subs:
    u = tangent_project(s, rng.standard_normal(s.basis.shape))
    init.append(retract(s, 0.3 * u / np.linalg.norm(u)))

# %% [markdown]
# ## Closed-form refits
#
# No trimming here so the two methods minimise the same objective.

# %%
svd = run_plain_ksc(points, KscConfig(4, 2, 0.0, max_iters=30, tol=0.0), init)
print("svd objective per iteration:")
print(np.round(svd.trace[:8], 4))
print("acc", acc(svd.labels, truth))

# %% [markdown]
# ## Grassmann steps
#
# The step size is `grass_eta` divided by the number of batch members in the
# cluster, so a larger batch does not mean a larger move.

# %%
for eta in (0.05, 0.5, 2.0):
    subs, labels, trace = run_grassmann_ksc(points, init, epochs=30, batch_size=50, grass_eta=eta)
    print(f"eta {eta:4}: objective after 1/5/30 epochs "
          f"{trace[0]:.4f} / {trace[4]:.4f} / {trace[-1]:.4f}   acc {acc(labels, truth):.2f}")

# %% [markdown]
# The SVD path reaches its fixed point in a couple of iterations. The
# gradient path matches it with a well-chosen step (0.5 here), crawls with a
# small one and overshoots into a worse configuration with a large one. Its
# appeal is that it needs only the current mini-batch, which matters once
# the latents are being retrained alongside the subspaces.
