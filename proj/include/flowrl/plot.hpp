#pragma once

#include <filesystem>
#include <vector>

namespace flowrl {

// One SVG learning curve per populated metric column, with the offline phase
// shaded. Pure function of the metrics file.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& metrics_csv,
                                              const std::filesystem::path& out_dir);

// Plot geometry shared with the structural tests.
struct PlotFrame {
    double width = 640.0, height = 400.0;
    double ml = 70.0, mr = 20.0, mt = 40.0, mb = 50.0;
    double x_of(double step, double smin, double smax) const {
        const double span = smax > smin ? smax - smin : 1.0;
        return ml + (step - smin) * (width - ml - mr) / span;
    }
};

}  // namespace flowrl
