#include "relpred/cli.hpp"

int main(int argc, char** argv) {
  return relpred::run_cli(argc, argv);
}
