#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace crossdiff::tools {

struct ScatterPoint {
    double x = 0;
    double y = 0;
    bool highlighted = false;  // drawn in the accent color
};

struct ScatterPanel {
    std::string title;
    std::vector<ScatterPoint> points;
};

// Two side-by-side panels with a y = x reference diagonal, written as a
// standalone SVG file.
inline void write_scatter_svg(const std::string& path, const std::string& heading,
                              const std::vector<ScatterPanel>& panels) {
    const double panel_size = 320.0, margin = 48.0, gap = 28.0;
    const double width = margin * 2 + panels.size() * panel_size + (panels.size() - 1) * gap;
    const double height = panel_size + margin * 2 + 24.0;

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << margin << "' y='24' font-family='monospace' font-size='15'>" << heading << "</text>\n";

    for (size_t p = 0; p < panels.size(); ++p) {
        const auto& panel = panels[p];
        double lo = 0.0, hi = 1.0;
        if (!panel.points.empty()) {
            lo = panel.points.front().x;
            hi = lo;
            for (const auto& pt : panel.points) {
                lo = std::min({lo, pt.x, pt.y});
                hi = std::max({hi, pt.x, pt.y});
            }
            const double pad = std::max(1e-9, (hi - lo) * 0.08);
            lo -= pad;
            hi += pad;
        }
        const double x0 = margin + p * (panel_size + gap);
        const double y0 = margin + 12.0;
        auto sx = [&](double v) { return x0 + (v - lo) / (hi - lo) * panel_size; };
        auto sy = [&](double v) { return y0 + panel_size - (v - lo) / (hi - lo) * panel_size; };

        svg << "<rect x='" << x0 << "' y='" << y0 << "' width='" << panel_size << "' height='" << panel_size
            << "' fill='none' stroke='#444'/>\n";
        svg << "<line x1='" << sx(lo) << "' y1='" << sy(lo) << "' x2='" << sx(hi) << "' y2='" << sy(hi)
            << "' stroke='#999' stroke-dasharray='5,4'/>\n";
        svg << "<text x='" << x0 << "' y='" << y0 - 6 << "' font-family='monospace' font-size='12'>"
            << panel.title << "</text>\n";
        for (const auto& pt : panel.points)
            svg << "<circle cx='" << sx(pt.x) << "' cy='" << sy(pt.y) << "' r='3' fill='"
                << (pt.highlighted ? "#d62728" : "#1f77b4") << "' fill-opacity='0.75'/>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(path);
    out << svg.str();
}

// Mean perpendicular distance of the points to the y = x diagonal.
inline double mean_diagonal_distance(const std::vector<ScatterPoint>& points) {
    if (points.empty()) return 0.0;
    double total = 0.0;
    for (const auto& pt : points) total += std::abs(pt.y - pt.x) / std::sqrt(2.0);
    return total / static_cast<double>(points.size());
}

}  // namespace crossdiff::tools
