#pragma once

#include <string>
#include <vector>

namespace solarlab {

// CSV with '#'-prefixed metadata lines, a header row, then data rows the
// caller has already formatted. Bytes are a pure function of the inputs.
void write_csv_file(const std::string& path,
                    const std::vector<std::string>& metadata,
                    const std::string& header,
                    const std::vector<std::string>& rows);

// Minimal static SVG charts. Deterministic output, no external assets.
void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values,
                         const std::vector<std::string>& metadata);

// several bars per label (e.g. run vs reference)
void write_grouped_bar_chart_svg(const std::string& path,
                                 const std::string& title,
                                 const std::vector<std::string>& labels,
                                 const std::vector<std::string>& series_names,
                                 const std::vector<std::vector<double>>& series,
                                 const std::vector<std::string>& metadata);

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<double>& xs,
                          const std::vector<double>& ys,
                          const std::vector<std::string>& metadata);

}  // namespace solarlab
