#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "file_text.hpp"

namespace riskgate::testing {

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "riskgate_tests" /
             (std::string(info->test_suite_name()) + "." + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace riskgate::testing
