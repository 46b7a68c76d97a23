#include <cstdio>

int main() {
  std::printf("calderon cli placeholder\n");
  return 0;
}
