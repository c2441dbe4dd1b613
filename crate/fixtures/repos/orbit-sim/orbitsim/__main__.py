import argparse

import numpy as np

argparse.ArgumentParser().parse_args()
