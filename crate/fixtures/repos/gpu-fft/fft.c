#ifndef __CUDACC__
#error "gpu-fft requires the CUDA toolchain"
#endif
int main(void) { return 0; }
