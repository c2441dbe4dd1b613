import argparse

import pandas
import statsmodels

argparse.ArgumentParser().parse_args()
