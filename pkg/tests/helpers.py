import datetime as dt

import numpy as np

from mango_curate.raster import AnnualMask, Scene


def make_scene(pixels, valid=None, region="R1", date=dt.date(2020, 6, 1), observed=None):
    return Scene(region, date, np.asarray(pixels, dtype=np.float64), valid, observed)


def make_mask(grid, region="R1"):
    return AnnualMask(region, np.asarray(grid, dtype=bool))
