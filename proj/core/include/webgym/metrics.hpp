#pragma once

#include <string>
#include <vector>

namespace webgym {

// Plain tabular text: one '#'-prefixed header line naming the columns, then
// one space-separated row per record. Diff-able, no plotting dependency.
struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(const std::vector<double>& row);
    size_t column_index(const std::string& name) const; // throws if missing
    std::vector<double> column(const std::string& name) const;
};

std::string metrics_to_text(const MetricsTable& table);
MetricsTable parse_metrics_text(const std::string& text);
void save_metrics(const std::string& path, const MetricsTable& table);
MetricsTable load_metrics(const std::string& path);

// Trailing moving average: out[i] = mean(values[max(0, i-window+1) .. i]).
// window 1 is the identity.
std::vector<double> moving_average(const std::vector<double>& values, int window);

// Smoothed training-dynamics curves (reward, trajectory tokens, interaction
// count) from a train-rl metrics table.
MetricsTable report_dynamics(const MetricsTable& metrics, int window);

} // namespace webgym
