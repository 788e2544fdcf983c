#include <cstdio>

int main() {
  std::puts("edgetune: subcommands not wired yet");
  return 0;
}
