"""Scratch probe: patch-id convergence under step-regime variants."""
import time
import numpy as np
from dida import data, nets, tasks

def make_sources(count, seed):
    out = []
    rng = np.random.default_rng(seed)
    for i in range(count):
        cfg = data.ToyGenConfig(data.TOY_KINDS[i % 3], n=int(rng.integers(350, 450)),
                                classes=int(rng.integers(2, 8)), seed=data.split_seed(seed, i),
                                noise=float(rng.uniform(0.02, 0.25)))
        out.append(data.generate_toy(cfg))
    return out

sources = make_sources(60, seed=42)
arch = nets.ArchConfig(t=8, r=16, mid_dim=16, head_dims=(16, 16, 8))

for lr, batch, epochs, pairs in ((3e-3, 4, 8, 128), (1e-2, 8, 8, 128)):
    model = nets.init_model(arch, seed=1)
    cfg = tasks.PatchIdConfig(epochs=epochs, batch_size=batch, pairs_per_epoch=pairs, eval_pairs=64,
                              rows_range=(100, 300), feats_range=(1, 2), learning_rate=lr, seed=3)
    t0 = time.time()
    payload, history = tasks.train_patch_id(model, sources, cfg)
    accs = [r['accuracy'] for r in history if r['split'] == 'test']
    print(f'lr={lr} batch={batch}: {time.time()-t0:.0f}s test acc per epoch: ' + ' '.join(f'{a:.3f}' for a in accs), flush=True)
