import argparse

import numpy
from Bio import PDB


def main():
    argparse.ArgumentParser().parse_args()
