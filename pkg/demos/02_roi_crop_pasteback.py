"""Crop ROIs around kept components, fake a second-stage model, paste back.

Run:  python demos/02_roi_crop_pasteback.py
"""
from scipy import ndimage

from cascade_roi import PipelineConfig
from cascade_roi.metrics import dice
from cascade_roi.phantom import PhantomSpec, generate
from cascade_roi.pipeline import postprocess
from cascade_roi.roi import crop, expand_box, paste_back
from cascade_roi.volume import Mask

ph = generate(PhantomSpec(seed=11, tumor_zone="pleural-straddling", n_spurious=2, noise_flip_prob=0.001))
res = postprocess(ph.coarse_prob, ph.lung, PipelineConfig())
box = res.boxes[0]
print("tight box", box.to_list(), "dims", box.dims)

for margin in (0, 16):
    b = expand_box(box, margin)
    roi = crop(ph.coarse_prob, b)
    print(f"margin {margin:2d}: crop dims {roi.meta.dims}, origin {roi.meta.origin}")

# stand-in for the fine model: threshold, keep the biggest blob, fill its holes.
# the 16-voxel margin drags in background noise, hence the blob step
b = expand_box(box, 16)
roi = crop(ph.coarse_prob, b)
lab, n = ndimage.label(roi.data >= 0.5)
sizes = ndimage.sum_labels(lab > 0, lab, index=range(1, n + 1))
fine = ndimage.binary_fill_holes(lab == 1 + int(sizes.argmax()))
final = paste_back(ph.gt.meta, [(b, Mask(roi.meta, fine))])

print("dice, post-processed mask:", round(dice(res.mask, ph.gt), 4))
print("dice, after fake stage 2: ", round(dice(final, ph.gt), 4))
outside = final.data.copy()
outside[b.slices] = 0
print("voxels pasted outside the box:", int(outside.sum()))
