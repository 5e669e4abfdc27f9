#include "webgym/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace webgym {

void MetricsTable::add_row(const std::vector<double>& row) {
    if (row.size() != columns.size()) throw std::invalid_argument("metrics row width mismatch");
    rows.push_back(row);
}

size_t MetricsTable::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::invalid_argument("metrics column not found: " + name);
}

std::vector<double> MetricsTable::column(const std::string& name) const {
    const size_t idx = column_index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row[idx]);
    return out;
}

std::string metrics_to_text(const MetricsTable& table) {
    std::string out = "#";
    for (const auto& col : table.columns) {
        out += ' ';
        out += col;
    }
    out += '\n';
    char buf[64];
    for (const auto& row : table.rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.10g", row[i]);
            if (i) out += ' ';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

MetricsTable parse_metrics_text(const std::string& text) {
    MetricsTable table;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        if (line[0] == '#') {
            if (have_header) continue; // tolerate trailing comments
            std::string tok;
            fields >> tok; // '#'
            while (fields >> tok) table.columns.push_back(tok);
            have_header = true;
            continue;
        }
        if (!have_header) throw std::invalid_argument("metrics text: missing header");
        std::vector<double> row;
        double value = 0.0;
        while (fields >> value) row.push_back(value);
        table.add_row(row);
    }
    return table;
}

void save_metrics(const std::string& path, const MetricsTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write metrics file: " + path);
    out << metrics_to_text(table);
}

MetricsTable load_metrics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read metrics file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_metrics_text(buf.str());
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
    if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
    std::vector<double> out;
    out.reserve(values.size());
    const size_t w = static_cast<size_t>(window);
    for (size_t i = 0; i < values.size(); ++i) {
        const size_t begin = i + 1 >= w ? i + 1 - w : 0;
        double sum = 0.0;
        for (size_t j = begin; j <= i; ++j) sum += values[j];
        out.push_back(sum / static_cast<double>(i - begin + 1));
    }
    return out;
}

MetricsTable report_dynamics(const MetricsTable& metrics, int window) {
    if (metrics.rows.empty()) throw std::invalid_argument("report_dynamics: empty metrics");
    MetricsTable out;
    out.columns = {"update", "reward_smooth", "traj_tokens_smooth", "interactions_smooth"};
    const auto update = metrics.column("update");
    const auto reward = moving_average(metrics.column("mean_reward"), window);
    const auto tokens = moving_average(metrics.column("mean_traj_tokens"), window);
    const auto inter = moving_average(metrics.column("mean_interactions"), window);
    for (size_t i = 0; i < update.size(); ++i) out.add_row({update[i], reward[i], tokens[i], inter[i]});
    return out;
}

} // namespace webgym
