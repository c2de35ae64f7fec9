"""NIfTI files and the key = value config format, without any external viewer.

Run:  python demos/05_nifti_and_config.py
"""
import tempfile
from pathlib import Path

import numpy as np

from cascade_roi.io import load_config, read_nifti, write_nifti
from cascade_roi.io.config import dump_config
from cascade_roi.io.nifti import DT_INT16, read_header
from cascade_roi.volume import GridMeta, Volume

tmp = Path(tempfile.mkdtemp())

# a fake CT patch in HU, stored as int16 the way scanners usually do
meta = GridMeta((32, 32, 16), spacing=(0.7, 0.7, 2.5), origin=(-120.0, -80.0, 30.0))
hu = np.random.default_rng(0).normal(-700, 150, meta.dims).round()
write_nifti(Volume(meta, hu), tmp / "ct.nii.gz", DT_INT16)

hdr = read_header(tmp / "ct.nii.gz")
print("datatype", hdr["datatype"], "bitpix", hdr["bitpix"], "pixdim", hdr["pixdim"][1:4])
back = read_nifti(tmp / "ct.nii.gz")
print(type(back).__name__, back.meta, "min/max", back.data.min(), back.data.max())

cfg_path = tmp / "pipeline.cfg"
cfg_path.write_text("""
# stricter than default, and keep the two biggest
lung_overlap_min = 0.85
top_k = 2
roi_margin = 16
""")
cfg = load_config(cfg_path)
print(dump_config(cfg))
