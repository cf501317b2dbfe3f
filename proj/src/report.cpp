#include "grogu/report.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "grogu/error.hpp"

namespace grogu {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json sign_json(const SignTestResult& s) {
  ordered_json j;
  j["wins"] = s.wins;
  j["losses"] = s.losses;
  j["ties"] = s.ties;
  j["p_two_sided"] = s.p_two_sided;
  return j;
}

ordered_json tally_json(const WinTally& t) {
  ordered_json j;
  j["wins"] = t.wins;
  j["losses"] = t.losses;
  j["ties"] = t.ties;
  j["win_rate"] = t.win_rate();
  if (t.wins + t.losses > 0) j["sign_test"] = sign_json(t.sign());
  return j;
}

ordered_json skipped_json(const std::vector<SkippedCase>& skipped) {
  auto arr = ordered_json::array();
  for (const auto& s : skipped) arr.push_back({{"qid", s.qid}, {"reason", s.reason}});
  return arr;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 2) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string gold_report_json(const GoldWinReport& report) {
  ordered_json j;
  j["kind"] = "gold";
  j["evaluated"] = report.evaluated;
  auto rates = ordered_json::array();
  for (const auto& r : report.rates) {
    ordered_json e;
    e["formulation"] = formulation_name(r.formulation);
    e["vs_distractor"] = tally_json(r.vs_distractor);
    e["vs_random"] = tally_json(r.vs_random);
    rates.push_back(std::move(e));
  }
  j["rates"] = std::move(rates);
  if (report.key_vs_plain_distractor) {
    j["keyentropy_vs_entropy"] = {{"distractor", sign_json(*report.key_vs_plain_distractor)},
                                  {"random", sign_json(*report.key_vs_plain_random)}};
  }
  j["skipped"] = skipped_json(report.skipped);
  return j.dump(2) + "\n";
}

std::string gold_report_csv(const GoldWinReport& report) {
  std::string out = "qid,formulation,gold,distractor,random\n";
  for (const auto& r : report.table) {
    out += csv_field(r.qid) + "," + std::string(formulation_name(r.formulation)) + "," + num(r.gold) +
           "," + num(r.distractor) + "," + num(r.random) + "\n";
  }
  return out;
}

std::string concordance_report_json(const ConcordanceReport& report) {
  ordered_json j;
  j["kind"] = "concordance";
  j["total"] = report.total;
  j["retr_correct"] = report.retr_correct;
  j["rand_correct"] = report.rand_correct;
  j["retr_wins"] = report.retr_wins;
  j["rand_wins"] = report.rand_wins;
  j["ties"] = report.ties;
  auto metrics = ordered_json::array();
  for (const auto& m : report.metrics) {
    ordered_json e;
    e["metric"] = m.metric;
    e["tau"] = m.tau.tau;
    e["concordant"] = m.tau.concordant;
    e["discordant"] = m.tau.discordant;
    e["utility_ties"] = m.tau.ties;
    e["accuracy"] = m.classifier.accuracy;
    e["f1"] = m.classifier.f1 ? ordered_json(*m.classifier.f1) : ordered_json(nullptr);
    e["macro_f1"] = m.classifier.macro_f1 ? ordered_json(*m.classifier.macro_f1) : ordered_json(nullptr);
    metrics.push_back(std::move(e));
  }
  j["metrics"] = std::move(metrics);
  if (report.tau_error) j["tau_error"] = *report.tau_error;
  j["skipped"] = skipped_json(report.skipped);
  return j.dump(2) + "\n";
}

std::string concordance_report_csv(const ConcordanceReport& report) {
  std::string out = "qid,correct_retr,correct_rand,answer_retr,answer_rand";
  for (const auto& m : report.metrics) out += ",retr_" + m.metric + ",rand_" + m.metric;
  out += "\n";
  for (const auto& r : report.table) {
    out += csv_field(r.qid) + "," + (r.correct_retr ? "1" : "0") + "," + (r.correct_rand ? "1" : "0") +
           "," + csv_field(r.answer_retr) + "," + csv_field(r.answer_rand);
    for (std::size_t m = 0; m < r.utility_retr.size(); ++m) {
      out += "," + num(r.utility_retr[m]) + "," + num(r.utility_rand[m]);
    }
    out += "\n";
  }
  return out;
}

std::string layout_report_json(const LayoutReport& report, Formulation formulation) {
  ordered_json j;
  j["kind"] = "layout";
  j["formulation"] = formulation_name(formulation);
  j["evaluated"] = report.table.size();
  const auto& a = report.accuracy;
  j["accuracy"] = {{"own_i", a.own_i},     {"cross_i", a.cross_i},   {"own_j", a.own_j},
                   {"cross_j", a.cross_j}, {"random_i", a.random_i}, {"random_j", a.random_j}};
  j["skipped"] = skipped_json(report.skipped);
  return j.dump(2) + "\n";
}

std::string layout_report_csv(const LayoutReport& report) {
  std::string out = "qid,pick_i,pick_j,pick_random";
  for (int v = 0; v < 3; ++v) {
    const auto s = std::to_string(kLayoutGoldSlots[v]);
    out += ",utility_i_" + s + ",utility_j_" + s + ",correct_i_" + s + ",correct_j_" + s;
  }
  out += "\n";
  for (const auto& r : report.table) {
    out += csv_field(r.qid) + "," + std::to_string(kLayoutGoldSlots[r.pick_i]) + "," +
           std::to_string(kLayoutGoldSlots[r.pick_j]) + "," + std::to_string(kLayoutGoldSlots[r.pick_random]);
    for (int v = 0; v < 3; ++v) {
      out += "," + num(r.utility_i[v]) + "," + num(r.utility_j[v]) + "," + (r.correct_i[v] ? "1" : "0") +
             "," + (r.correct_j[v] ? "1" : "0");
    }
    out += "\n";
  }
  return out;
}

std::string summarize_report_json(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("report is not valid JSON: ") + e.what());
  }
  const auto kind = j.value("kind", std::string());
  std::ostringstream out;
  if (kind == "gold") {
    out << "Gold identification (" << j["evaluated"].get<std::size_t>() << " cases)\n";
    out << "  metric        vs distractor   vs random\n";
    for (const auto& r : j["rates"]) {
      char line[128];
      std::snprintf(line, sizeof line, "  %-12s  %12s%%  %9s%%\n", r["formulation"].get<std::string>().c_str(),
                    fixed(r["vs_distractor"]["win_rate"].get<double>(), 1).c_str(),
                    fixed(r["vs_random"]["win_rate"].get<double>(), 1).c_str());
      out << line;
    }
  } else if (kind == "concordance") {
    out << "Concordance (" << j["total"].get<std::size_t>() << " cases, retr wins "
        << j["retr_wins"].get<std::size_t>() << ", rand wins " << j["rand_wins"].get<std::size_t>() << ")\n";
    if (j.contains("tau_error")) out << "  " << j["tau_error"].get<std::string>() << "\n";
    for (const auto& m : j["metrics"]) {
      out << "  " << m["metric"].get<std::string>() << ": tau " << fixed(m["tau"].get<double>(), 3)
          << ", accuracy " << fixed(m["accuracy"].get<double>(), 1) << "%, F1 "
          << (m["f1"].is_null() ? std::string("undefined") : fixed(m["f1"].get<double>(), 3)) << "\n";
    }
  } else if (kind == "layout") {
    const auto& a = j["accuracy"];
    out << "Layout selection (" << j["evaluated"].get<std::size_t>() << " cases, "
        << j["formulation"].get<std::string>() << ")\n";
    out << "  LM_i: own " << fixed(a["own_i"].get<double>()) << "  cross " << fixed(a["cross_i"].get<double>())
        << "  random " << fixed(a["random_i"].get<double>()) << "\n";
    out << "  LM_j: own " << fixed(a["own_j"].get<double>()) << "  cross " << fixed(a["cross_j"].get<double>())
        << "  random " << fixed(a["random_j"].get<double>()) << "\n";
  } else {
    fail(ErrorKind::kValidation, "unknown report kind '" + kind + "'");
  }
  if (j.contains("skipped") && !j["skipped"].empty()) {
    out << "  skipped: " << j["skipped"].size() << "\n";
  }
  return out.str();
}

}  // namespace grogu
