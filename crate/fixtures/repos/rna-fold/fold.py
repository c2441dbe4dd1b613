import sys

import networkx
import numpy

print('usage: fold.py seq.fa')
