import sys

import scipy
import xarray

if __name__ == '__main__':
    print('usage: downscale.py in.nc out.nc')
