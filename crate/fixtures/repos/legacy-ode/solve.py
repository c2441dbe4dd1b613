import scipy

print('usage: solve.py model.txt')
