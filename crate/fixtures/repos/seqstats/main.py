import argparse
import numpy as np


def main():
    p = argparse.ArgumentParser()
    p.add_argument('--input')
    a = p.parse_args()
    print(np.zeros(1))


if __name__ == '__main__':
    main()
