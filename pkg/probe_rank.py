"""Scratch probe for the ranking task at desk scale (not part of the package)."""
import time

import numpy as np

from dida import data, nets, tasks


def make_sources(count, seed, n_lo=460, n_hi=540, noise_lo=0.02, noise_hi=0.30):
    out = []
    rng = np.random.default_rng(seed)
    for i in range(count):
        cfg = data.ToyGenConfig(
            data.TOY_KINDS[i % 3],
            n=int(rng.integers(n_lo, n_hi)),
            classes=int(rng.integers(2, 8)),
            seed=data.split_seed(seed, i),
            noise=float(rng.uniform(noise_lo, noise_hi)),
        )
        out.append(data.generate_toy(cfg))
    return out


def main():
    t0 = time.time()
    sources = make_sources(120, seed=5)
    print(f"gen {time.time()-t0:.1f}s")

    # how much does theta matter, and does the best theta vary by dataset?
    rng = np.random.default_rng(0)
    spreads, best_ks = [], []
    for z in sources[:20]:
        patch, _ = data.sample_patch(z, 350, 2, seed=1)
        patch = data.normalize_features(patch)
        accs = {}
        for k in (1, 3, 10, 30, 100):
            theta = tasks.HyperConfigKnn(k, 2, "uniform")
            accs[k] = tasks.knn_performance_oracle(patch, theta, seed=2)
        spreads.append(max(accs.values()) - min(accs.values()))
        best_ks.append(max(accs, key=accs.get))
    print("oracle spread over k: mean %.3f max %.3f" % (np.mean(spreads), max(spreads)))
    print("best k histogram:", {k: best_ks.count(k) for k in sorted(set(best_ks))})

    arch = nets.ArchConfig(t=8, r=16, mid_dim=16, head_dims=(16, 16, 8))
    cfg = tasks.RankerConfig(
        epochs=6, batch_size=16, triplets_per_epoch=160, eval_triplets=192,
        triplets_per_patch=4, rows_range=(300, 400), feats_range=(1, 2), seed=0,
    )

    t0 = time.time()
    model = nets.init_model(arch, seed=11)
    head = tasks.init_ranker_head(arch.meta_dim, seed=12)
    _, hist = tasks.train_ranker(model, head, sources, cfg)
    print(f"dida ranker {time.time()-t0:.1f}s")
    for rec in hist:
        if rec["split"] == "test":
            print("dida", rec)

    t0 = time.time()
    from dida.metafeatures import HANDCRAFTED_NAMES

    hc_head = tasks.init_ranker_head(len(HANDCRAFTED_NAMES), seed=13)
    _, hc_hist = tasks.train_ranker(tasks.HANDCRAFTED, hc_head, sources, cfg)
    print(f"hc ranker {time.time()-t0:.1f}s")
    for rec in hc_hist:
        if rec["split"] == "test":
            print("hc  ", rec)


if __name__ == "__main__":
    main()
