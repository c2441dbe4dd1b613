#pragma once
double energy(int n);
