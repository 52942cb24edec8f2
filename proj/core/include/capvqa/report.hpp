// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

#include "capvqa/evaluation.hpp"

namespace capvqa {

enum class ReportFormat { markdown, csv, json };

ReportFormat parse_report_format(std::string_view text);
std::string_view extension(ReportFormat format);

/// Two decimals, fixed.
std::string format_percent(double value);

/// Rows are the populated categories in taxonomy order followed by a
/// "total" row (dropped when only one category row exists); one column per
/// policy.
std::string render_report(const RunReport& report, ReportFormat format);

/// Inverse of render_report(..., json).
RunReport parse_report_json(std::string_view text);

std::string render_error_report(const ErrorReport& report);
ErrorReport parse_error_report(std::string_view text);

}  // namespace capvqa
