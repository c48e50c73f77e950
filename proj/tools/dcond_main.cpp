#include <iostream>

#include "dcond/cli.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates many short-lived matrices above glibc's default mmap
  // threshold; keeping them on the heap avoids a page-fault storm.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  return dcond::run_cli(argc, argv, std::cout, std::cerr);
}
