import lmfit
import numpy


def run():
    print('usage: spinfit spectrum.csv')
