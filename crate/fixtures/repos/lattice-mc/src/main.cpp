#include <iostream>
#include "ising.hpp"

int main(int argc, char** argv) {
    std::cout << energy(4) << std::endl;
    return 0;
}
