#pragma once

// Registry of finite-difference checks, one entry per differentiable op,
// grouped into the ndkernel, attention and model suites.

#include <functional>
#include <string>
#include <vector>

#include "sepformer/gradcheck.hpp"

namespace sepformer {

struct GradSuiteEntry {
  std::string suite;
  std::string op;
  std::function<GradcheckResult()> run;
};

const std::vector<std::string>& gradient_suite_names();

// `which` is "all" or one suite name; anything else is a ConfigError.
std::vector<GradSuiteEntry> gradient_suite(const std::string& which);

constexpr double kGradTolerance = 1e-4;

}  // namespace sepformer
