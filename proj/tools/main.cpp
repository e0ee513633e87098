#include <csignal>
#include <iostream>

#include "cli.hpp"

namespace {

void on_sigint(int) { codecot::cli::request_stop(); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  std::signal(SIGTERM, on_sigint);
  return codecot::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
