#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace acceptance {

struct Criterion {
  int id = 0;
  bool passed = false;
  std::string detail;
};

inline void report(const Criterion& c) {
  std::printf("criterion %2d: %s  %s\n", c.id, c.passed ? "PASS" : "FAIL", c.detail.c_str());
  std::fflush(stdout);
}

std::vector<Criterion> run_oracle_suite();

struct DirectionalOptions {
  int seeds = 5;
  int generations = 300;
  int eval_episodes = 32;
  std::string work_dir = "acceptance_runs";
};
std::vector<Criterion> run_directional_suite(const DirectionalOptions& opts);

}  // namespace acceptance
