#include <stdio.h>
#include <string.h>

int main(int argc, char **argv) {
    puts("fastq-trim 1.0");
    return 0;
}
