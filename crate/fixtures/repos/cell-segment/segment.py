import numpy
from scipy import ndimage

print('usage: segment.py image.tif')
