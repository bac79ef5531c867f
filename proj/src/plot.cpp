#include "flowrl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>

#include "flowrl/errors.hpp"
#include "flowrl/metrics.hpp"

namespace flowrl {

namespace {

struct Series {
    std::string name;
    std::vector<std::pair<std::size_t, double>> points;  // (step, value)
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void write_svg(const std::filesystem::path& path, const Series& s,
               std::optional<std::size_t> offline_end, const PlotFrame& fr) {
    std::ofstream f(path);
    if (!f) throw StateError("plot: cannot open " + path.string());

    double smin = 0, smax = 1, vmin = 0, vmax = 1;
    if (!s.points.empty()) {
        smin = static_cast<double>(s.points.front().first);
        smax = static_cast<double>(s.points.back().first);
        vmin = vmax = s.points.front().second;
        for (const auto& [st, v] : s.points) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
        if (vmax == vmin) {
            vmax += 1.0;
            vmin -= 1.0;
        }
    }
    const double plot_h = fr.height - fr.mt - fr.mb;
    auto ypix = [&](double v) { return fr.mt + (vmax - v) * plot_h / (vmax - vmin); };

    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fr.width << "\" height=\""
      << fr.height << "\" viewBox=\"0 0 " << fr.width << " " << fr.height << "\">\n";
    f << "<rect width=\"" << fr.width << "\" height=\"" << fr.height << "\" fill=\"white\"/>\n";

    if (offline_end && !s.points.empty()) {
        const double x0 = fr.ml;
        const double x1 = fr.x_of(static_cast<double>(*offline_end), smin, smax);
        f << "<rect id=\"offline-region\" x=\"" << fmt(x0) << "\" y=\"" << fr.mt << "\" width=\""
          << fmt(x1 - x0) << "\" height=\"" << fmt(plot_h)
          << "\" fill=\"#d8d8d8\" fill-opacity=\"0.6\"/>\n";
    }

    // axes
    f << "<line x1=\"" << fr.ml << "\" y1=\"" << fr.mt << "\" x2=\"" << fr.ml << "\" y2=\""
      << fr.mt + plot_h << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << fr.ml << "\" y1=\"" << fr.mt + plot_h << "\" x2=\"" << fr.width - fr.mr
      << "\" y2=\"" << fr.mt + plot_h << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << fr.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << s.name << "</text>\n";
    f << "<text x=\"" << fr.width / 2 << "\" y=\"" << fr.height - 12
      << "\" text-anchor=\"middle\" font-size=\"11\">step</text>\n";

    if (!s.points.empty()) {
        f << "<text x=\"" << fr.ml - 6 << "\" y=\"" << ypix(vmax) + 4
          << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(vmax) << "</text>\n";
        f << "<text x=\"" << fr.ml - 6 << "\" y=\"" << ypix(vmin) + 4
          << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(vmin) << "</text>\n";
        f << "<text x=\"" << fr.ml << "\" y=\"" << fr.mt + plot_h + 16
          << "\" text-anchor=\"middle\" font-size=\"10\">" << smin << "</text>\n";
        f << "<text x=\"" << fr.width - fr.mr << "\" y=\"" << fr.mt + plot_h + 16
          << "\" text-anchor=\"middle\" font-size=\"10\">" << smax << "</text>\n";

        f << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
        for (const auto& [st, v] : s.points)
            f << fmt(fr.x_of(static_cast<double>(st), smin, smax)) << "," << fmt(ypix(v)) << " ";
        f << "\"/>\n";
    }
    f << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& metrics_csv,
                                              const std::filesystem::path& out_dir) {
    const std::vector<MetricsRow> rows = read_metrics(metrics_csv);
    std::filesystem::create_directories(out_dir);

    std::optional<std::size_t> offline_end;
    for (const MetricsRow& r : rows)
        if (r.phase == "offline") offline_end = r.step;

    struct Col {
        const char* name;
        std::function<std::optional<double>(const MetricsRow&)> get;
    };
    const std::vector<Col> cols = {
        {"eval_success_rate", [](const MetricsRow& r) { return std::optional<double>(r.eval_success_rate); }},
        {"eval_mean_return", [](const MetricsRow& r) { return std::optional<double>(r.eval_mean_return); }},
        {"loss_flow_critic", [](const MetricsRow& r) { return r.loss_flow_critic; }},
        {"loss_main_critic", [](const MetricsRow& r) { return r.loss_main_critic; }},
        {"loss_bc_flow", [](const MetricsRow& r) { return r.loss_bc_flow; }},
        {"loss_actor", [](const MetricsRow& r) { return r.loss_actor; }},
        {"loss_distill", [](const MetricsRow& r) { return r.loss_distill; }},
        {"actor_grad_norm", [](const MetricsRow& r) { return r.actor_grad_norm; }},
        {"w1_to_oracle", [](const MetricsRow& r) { return r.w1_to_oracle; }},
    };

    PlotFrame fr;
    std::vector<std::filesystem::path> written;
    for (const Col& c : cols) {
        Series s;
        s.name = c.name;
        for (const MetricsRow& r : rows)
            if (auto v = c.get(r)) s.points.emplace_back(r.step, *v);
        // Always emit the two evaluation curves (empty axes for empty files);
        // loss columns only when populated.
        const bool is_eval = std::string(c.name).rfind("eval_", 0) == 0;
        if (s.points.empty() && !is_eval) continue;
        const std::filesystem::path p = out_dir / ("plot_" + s.name + ".svg");
        write_svg(p, s, offline_end, fr);
        written.push_back(p);
    }
    return written;
}

}  // namespace flowrl
