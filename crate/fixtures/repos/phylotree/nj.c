#include <stdio.h>

int main(void) {
    printf("usage: phylotree matrix.txt\n");
    return 0;
}
