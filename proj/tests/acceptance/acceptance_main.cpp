// Prints one PASS/FAIL line per acceptance criterion. Exit status is 0 only
// when every selected criterion passes.
//
//   camel_acceptance            all criteria
//   camel_acceptance 3 5        selected criteria

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "criteria.hpp"

int main(int argc, char** argv) {
  using namespace camel::acceptance;
  std::vector<int> ids;
  try {
    for (int i = 1; i < argc; ++i) ids.push_back(std::stoi(argv[i]));
  } catch (const std::exception&) {
    std::cerr << "usage: camel_acceptance [criterion ...]\n";
    return 2;
  }
  if (ids.empty()) ids = all_ids();
  int failed = 0;
  for (const int id : ids) {
    Outcome o;
    try {
      o = run_criterion(id);
    } catch (const std::exception& e) {
      o = Outcome{.id = id, .name = "error", .pass = false, .detail = e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << fmt::format("[{}] criterion {:>2} {:<32} {} ({:.2f}s)\n", o.pass ? "PASS" : "FAIL", o.id, o.name,
                             o.detail, o.seconds)
              << std::flush;
  }
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
