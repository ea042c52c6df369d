# %% [markdown]
# # MNIST from pixels to clusters
#
# Pretrain the convolutional autoencoder, initialise subspaces with k-means
# on the latent codes, then fine-tune jointly. Raw-pixel k-means is the
# reference point.
#
# The defaults are sized to finish in a few minutes on a laptop CPU. Use
# `--n 10000 --pretrain-epochs 30 --epochs 20` for the larger run.
#
#     python notebooks/03_mnist_pipeline.py --data-dir /path/to/data

# %%
import argparse
import time

from deepksc.autoencoder import encode
from deepksc.baselines import kmeans
from deepksc.data import load_dataset
from deepksc.metrics import evaluate
from deepksc.trainer import TrainConfig, TrainReport, init_subspaces, pretrain, train_kscn_svd

parser = argparse.ArgumentParser()
parser.add_argument("--data-dir", default=None, help="folder containing mnist/ (default: KSCN_DATA_DIR or ./data)")
parser.add_argument("--n", type=int, default=2000, help="number of test images to use")
parser.add_argument("--pretrain-epochs", type=int, default=10)
parser.add_argument("--epochs", type=int, default=5)
args = parser.parse_args()

ds = load_dataset("mnist", "test", root=args.data_dir)
x, y = ds.images[: args.n], ds.labels[: args.n]
cfg = TrainConfig(k=10, p=7, lam=0.08, pretrain_epochs=args.pretrain_epochs, epochs=args.epochs)

# %% [markdown]
# ## Pretraining

# %%
t0 = time.perf_counter()
rep = TrainReport()
params = pretrain(x, cfg, report=rep)
for r in rep:
    print(f"  pretrain epoch {r.epoch:3d}  reconstruction {r.loss_ae / len(x):.3f} per image")
print(f"{time.perf_counter() - t0:.0f} s")

# %% [markdown]
# ## Initial subspaces
#
# k-means on the 80-dimensional codes, then a 7-dimensional PCA basis for
# every cluster. Its accuracy is the CAE-KM baseline.

# %%
subs, init_labels = init_subspaces(encode(params, x), cfg)
print("CAE-KM:", evaluate(init_labels, y))

# %% [markdown]
# ## Joint fine-tuning

# %%
res = train_kscn_svd(x, cfg, params=params, init=subs, truth=y)
for r in res.report:
    print(f"  epoch {r.epoch:3d}  ae {r.loss_ae:10.1f}  ksc {r.loss_ksc:10.1f}  acc {r.acc:6.2f}")
print("fine-tuned:", evaluate(res.labels, y))

# %% [markdown]
# ## Raw pixels

# %%
print("raw k-means:", evaluate(kmeans(x.reshape(len(x), -1) / 255.0, 10, restarts=10).labels, y))
