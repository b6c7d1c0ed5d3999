#include <cstdio>

#include "av/common.hpp"

int main() {
  std::printf("%s\n", av::kVersion);
  return 0;
}
