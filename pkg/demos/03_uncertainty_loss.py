"""MC-sample variance, confidence weights, and the adaptive loss next to plain Dice+CE.

Run:  python demos/03_uncertainty_loss.py
"""
import numpy as np

from cascade_roi.phantom import PhantomSpec, generate
from cascade_roi.uncertainty import adaptive_loss, alpha_map, dice_ce_loss, variance_map

ph = generate(PhantomSpec(seed=5, n_samples=8, jitter=0.15))
U = variance_map(ph.samples)
alpha = alpha_map(U, scale=1.0)

edge = U.data > 1e-3
print("voxels with noticeable variance:", int(edge.sum()), "of", U.meta.size)
print("max U %.4f  ->  min alpha %.4f" % (U.data.max(), alpha.data.min()))

# crop around the tumor so the loss is about the tumor, not 900k background voxels
c = ph.tumor.center
sl = tuple(slice(v - 12, v + 13) for v in c)
p = ph.samples[0].data[sl]
g = ph.gt.data[sl]
a = alpha.data[sl]

ada = adaptive_loss(p, g, a)
base = dice_ce_loss(p, g)
print("\nadaptive : value %.5f  dice %.5f  ce %.5f" % (ada.value, ada.dice_term, ada.ce_term))
print("dice + ce: value %.5f  dice %.5f  ce %.5f" % (base.value, base.dice_term, base.ce_term))

# where alpha is low the gradient leans on cross-entropy instead of Dice
low = a < np.quantile(a, 0.05)
print(f"mean |grad| on the 5% least certain voxels: {np.abs(ada.gradient[low]).mean():.2e}")
print(f"mean |grad| elsewhere:                     {np.abs(ada.gradient[~low]).mean():.2e}")
