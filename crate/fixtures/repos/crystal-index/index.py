import numpy

print('usage: index.py frames/')
