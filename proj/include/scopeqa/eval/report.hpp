#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "scopeqa/eval/metrics.hpp"

namespace scopeqa::eval {

nlohmann::json report_to_json(const EvalReport& report);
// id,mos,raw,mapped
std::string report_rows_csv(const EvalReport& report);

// MOS against mapped score, with the identity diagonal for reference.
std::string scatter_svg(const EvalReport& report, const std::string& title);

struct LossSeries {
  std::string name;
  std::vector<double> epochs;
  std::vector<double> values;
};

std::string loss_curve_svg(const std::vector<LossSeries>& series, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace scopeqa::eval
