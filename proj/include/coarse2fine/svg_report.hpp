#pragma once

#include <optional>
#include <string>

#include "coarse2fine/io.hpp"

namespace c2f {

// Deterministic SVG chart of the per-bucket estimates: one series per method
// with +/-1 SE bars, plus the true curve as a thick black line when a truth
// table is given. Identical inputs produce identical bytes.
std::string render_report_svg(const CsvTable& rho, const std::optional<CsvTable>& truth);

}  // namespace c2f
