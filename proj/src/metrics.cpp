#include "flowrl/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowrl/errors.hpp"

namespace flowrl {

const char* kMetricsHeader =
    "step,phase,eval_success_rate,eval_mean_return,loss_flow_critic,loss_main_critic,"
    "loss_bc_flow,loss_actor,loss_distill,actor_grad_norm,w1_to_oracle";

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

std::optional<double> parse_opt(const std::string& s, std::size_t line_no) {
    if (s.empty()) return std::nullopt;
    try {
        return std::stod(s);
    } catch (...) {
        throw ParseError("metrics line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
}

}  // namespace

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path) {
    std::ofstream f(path_, std::ios::trunc);
    if (!f) throw StateError("metrics: cannot open " + path_.string());
    f << kMetricsHeader << "\n";
}

void MetricsWriter::write(const MetricsRow& r) {
    std::ofstream f(path_, std::ios::app);
    if (!f) throw StateError("metrics: cannot append to " + path_.string());
    f << r.step << ',' << r.phase << ',' << fmt(r.eval_success_rate) << ','
      << fmt(r.eval_mean_return) << ',' << fmt(r.loss_flow_critic) << ','
      << fmt(r.loss_main_critic) << ',' << fmt(r.loss_bc_flow) << ',' << fmt(r.loss_actor) << ','
      << fmt(r.loss_distill) << ',' << fmt(r.actor_grad_norm) << ',' << fmt(r.w1_to_oracle)
      << "\n";
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw StateError("metrics: cannot open " + path.string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(f, line)) throw ParseError("metrics line 1: empty file");
    if (line != kMetricsHeader) throw ParseError("metrics line 1: unexpected header");
    std::vector<MetricsRow> rows;
    while (std::getline(f, line)) {
        line_no += 1;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        cells.resize(11);
        MetricsRow r;
        try {
            r.step = std::stoul(cells[0]);
        } catch (...) {
            throw ParseError("metrics line " + std::to_string(line_no) + ": bad step");
        }
        r.phase = cells[1];
        if (r.phase != "offline" && r.phase != "online")
            throw ParseError("metrics line " + std::to_string(line_no) + ": bad phase");
        const auto sr = parse_opt(cells[2], line_no);
        const auto mr = parse_opt(cells[3], line_no);
        if (!sr || !mr)
            throw ParseError("metrics line " + std::to_string(line_no) + ": missing eval cells");
        r.eval_success_rate = *sr;
        r.eval_mean_return = *mr;
        r.loss_flow_critic = parse_opt(cells[4], line_no);
        r.loss_main_critic = parse_opt(cells[5], line_no);
        r.loss_bc_flow = parse_opt(cells[6], line_no);
        r.loss_actor = parse_opt(cells[7], line_no);
        r.loss_distill = parse_opt(cells[8], line_no);
        r.actor_grad_norm = parse_opt(cells[9], line_no);
        r.w1_to_oracle = parse_opt(cells[10], line_no);
        if (!rows.empty() && r.step < rows.back().step)
            throw ParseError("metrics line " + std::to_string(line_no) + ": step not monotone");
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace flowrl
