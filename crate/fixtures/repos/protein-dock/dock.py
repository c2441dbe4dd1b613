import numpy
from Bio import PDB

print('usage: dock.py receptor.pdb ligand.pdb')
