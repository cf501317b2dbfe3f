#pragma once

// JSON, CSV, and plain-text renderings of evaluation reports. JSON keys are
// emitted in a fixed order so reports diff cleanly across runs.

#include <string>

#include "grogu/evaluation.hpp"

namespace grogu {

std::string gold_report_json(const GoldWinReport& report);
std::string gold_report_csv(const GoldWinReport& report);

std::string concordance_report_json(const ConcordanceReport& report);
std::string concordance_report_csv(const ConcordanceReport& report);

std::string layout_report_json(const LayoutReport& report, Formulation formulation);
std::string layout_report_csv(const LayoutReport& report);

// Human-readable summary of any report JSON written by the functions above.
std::string summarize_report_json(const std::string& json_text);

}  // namespace grogu
