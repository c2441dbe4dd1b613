import argparse

import obspy

argparse.ArgumentParser().parse_args()
