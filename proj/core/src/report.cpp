// SPDX-License-Identifier: Apache-2.0
#include "capvqa/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "capvqa/error.hpp"
#include "json.hpp"

namespace capvqa {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct Row {
  std::string name;
  std::vector<Tally> cells;
};

std::vector<Row> table_rows(const RunReport& report) {
  std::vector<Row> rows;
  auto add_row = [&](std::string name, auto&& pick) {
    Row row{std::move(name), {}};
    bool populated = false;
    for (const auto& result : report.results) {
      const Tally tally = pick(result);
      populated = populated || tally.total > 0;
      row.cells.push_back(tally);
    }
    if (populated) rows.push_back(std::move(row));
  };
  for (StructuralType type : kStructuralTypes) {
    add_row(std::string(to_string(type)), [&](const PolicyResult& r) {
      auto it = r.per_structural.find(type);
      return it == r.per_structural.end() ? Tally{} : it->second;
    });
  }
  for (SemanticType type : kSemanticTypes) {
    add_row(std::string(to_string(type)), [&](const PolicyResult& r) {
      auto it = r.per_semantic.find(type);
      return it == r.per_semantic.end() ? Tally{} : it->second;
    });
  }
  if (rows.size() > 1) {
    add_row("total", [](const PolicyResult& r) { return r.overall; });
  }
  return rows;
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

ordered_json tally_json(const Tally& tally) {
  return {{"correct", tally.correct},
          {"total", tally.total},
          {"accuracy", round2(tally.accuracy())}};
}

Tally tally_from(const json& j) {
  return {j.at("correct").get<std::size_t>(), j.at("total").get<std::size_t>()};
}

ordered_json policy_json(const MatchPolicy& policy) {
  if (policy.kind == MatchPolicy::Kind::exact) return {{"kind", "exact"}};
  return {{"kind", "semantic"}, {"threshold", policy.threshold}};
}

MatchPolicy policy_from(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "exact") return MatchPolicy::exact();
  if (kind == "semantic") return MatchPolicy::semantic(j.at("threshold").get<double>());
  throw Error(ErrorCode::kParse, "unknown policy kind '" + kind + "'");
}

std::string render_markdown(const RunReport& report) {
  std::ostringstream out;
  out << "| category |";
  for (const auto& result : report.results) out << " " << result.policy.label() << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < report.results.size(); ++i) out << "---:|";
  out << "\n";
  for (const auto& row : table_rows(report)) {
    out << "| " << row.name << " |";
    for (const auto& cell : row.cells) out << " " << format_percent(cell.accuracy()) << " |";
    out << "\n";
  }
  return out.str();
}

std::string render_csv(const RunReport& report) {
  std::ostringstream out;
  out << "category";
  for (const auto& result : report.results) out << "," << result.policy.label();
  out << "\n";
  for (const auto& row : table_rows(report)) {
    out << row.name;
    for (const auto& cell : row.cells) out << "," << format_percent(cell.accuracy());
    out << "\n";
  }
  return out.str();
}

std::string render_json(const RunReport& report) {
  ordered_json root;
  auto& results = root["results"] = ordered_json::array();
  for (const auto& result : report.results) {
    ordered_json entry;
    entry["policy"] = policy_json(result.policy);
    entry["label"] = result.policy.label();
    entry["overall"] = tally_json(result.overall);
    auto& structural = entry["per_structural"] = ordered_json::object();
    for (const auto& [type, tally] : result.per_structural) {
      structural[std::string(to_string(type))] = tally_json(tally);
    }
    auto& semantic = entry["per_semantic"] = ordered_json::object();
    for (const auto& [type, tally] : result.per_semantic) {
      semantic[std::string(to_string(type))] = tally_json(tally);
    }
    results.push_back(std::move(entry));
  }
  const auto& m = report.metadata;
  root["metadata"] = {{"total_questions", m.total_questions},
                      {"answered", m.answered},
                      {"errored", m.errored},
                      {"missing", m.missing},
                      {"degenerate_similarity", m.degenerate_similarity},
                      {"embedding_model", m.embedding_model},
                      {"manifest_ref", m.manifest_ref},
                      {"deviation_flags", m.deviation_flags}};
  return root.dump(2) + "\n";
}

}  // namespace

ReportFormat parse_report_format(std::string_view text) {
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown report format '" + std::string(text) + "'");
}

std::string_view extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::markdown: return "md";
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
  }
  return "";
}

std::string format_percent(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.2f", value);
  return buffer;
}

std::string render_report(const RunReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::markdown: return render_markdown(report);
    case ReportFormat::csv: return render_csv(report);
    case ReportFormat::json: return render_json(report);
  }
  return {};
}

RunReport parse_report_json(std::string_view text) {
  const json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorCode::kParse, "report is not a JSON object");
  }
  RunReport report;
  try {
    for (const auto& entry : root.at("results")) {
      PolicyResult result;
      result.policy = policy_from(entry.at("policy"));
      result.overall = tally_from(entry.at("overall"));
      for (const auto& [name, tally] : entry.at("per_structural").items()) {
        result.per_structural[parse_structural(name)] = tally_from(tally);
      }
      for (const auto& [name, tally] : entry.at("per_semantic").items()) {
        result.per_semantic[parse_semantic(name)] = tally_from(tally);
      }
      report.results.push_back(std::move(result));
    }
    const auto& m = root.at("metadata");
    auto& meta = report.metadata;
    meta.total_questions = m.at("total_questions").get<std::size_t>();
    meta.answered = m.at("answered").get<std::size_t>();
    meta.errored = m.at("errored").get<std::size_t>();
    meta.missing = m.at("missing").get<std::size_t>();
    meta.degenerate_similarity = m.at("degenerate_similarity").get<std::size_t>();
    meta.embedding_model = m.at("embedding_model").get<std::string>();
    meta.manifest_ref = m.at("manifest_ref").get<std::string>();
    meta.deviation_flags = m.at("deviation_flags").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string render_error_report(const ErrorReport& report) {
  ordered_json root;
  root["share_of_errors_yesno"] = round2(report.share_of_errors_yesno);
  root["nonyesno_rate_among_wrong_yesno"] = round2(report.nonyesno_rate_among_wrong_yesno);
  root["unanswerable_rate"] = round2(report.unanswerable_rate);
  root["over_length_rate"] = round2(report.over_length_rate);
  root["counts"] = {{"total", report.total},
                    {"wrong", report.wrong},
                    {"wrong_yesno", report.wrong_yesno},
                    {"wrong_yesno_nonyesno", report.wrong_yesno_nonyesno},
                    {"unanswerable", report.unanswerable},
                    {"over_length", report.over_length}};
  return root.dump(2) + "\n";
}

ErrorReport parse_error_report(std::string_view text) {
  const json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.contains("counts")) {
    throw Error(ErrorCode::kParse, "error report is not a JSON object with counts");
  }
  const auto& c = root["counts"];
  ErrorReport report;
  try {
    report.total = c.at("total").get<std::size_t>();
    report.wrong = c.at("wrong").get<std::size_t>();
    report.wrong_yesno = c.at("wrong_yesno").get<std::size_t>();
    report.wrong_yesno_nonyesno = c.at("wrong_yesno_nonyesno").get<std::size_t>();
    report.unanswerable = c.at("unanswerable").get<std::size_t>();
    report.over_length = c.at("over_length").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed error report: ") + e.what());
  }
  // Rates are derived; recompute them from the counts.
  auto pct = [](std::size_t part, std::size_t whole) {
    return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
  };
  report.share_of_errors_yesno = pct(report.wrong_yesno, report.wrong);
  report.nonyesno_rate_among_wrong_yesno =
      pct(report.wrong_yesno_nonyesno, report.wrong_yesno);
  report.unanswerable_rate = pct(report.unanswerable, report.total);
  report.over_length_rate = pct(report.over_length, report.total);
  return report;
}

}  // namespace capvqa
