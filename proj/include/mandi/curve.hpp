#pragma once

// Raw-vs-balanced tradeoff curve as CSV and a fixed-size SVG.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mandi/error.hpp"
#include "mandi/evaluation.hpp"
#include "mandi/format.hpp"

namespace mandi {

inline constexpr const char* kCurveCsvHeader =
    "alpha,family,b,val_raw,val_balanced,test_raw,test_balanced,spec_digest";

inline std::string curve_csv(std::span<const SweepPoint> points) {
    std::string out = kCurveCsvHeader;
    out += '\n';
    for (const auto& p : points) {
        out += format_fixed(p.alpha, 6) + ',' + p.family + ',' + std::to_string(p.b) + ',' +
               format_fixed(p.validation.raw_accuracy, 6) + ',' + format_fixed(p.validation.balanced_accuracy, 6) +
               ',' + format_fixed(p.test.raw_accuracy, 6) + ',' + format_fixed(p.test.balanced_accuracy, 6) + ',' +
               p.spec_digest + '\n';
    }
    return out;
}

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
                                           "#e377c2", "#7f7f7f"};

/// Axis span in units of 0.05, padded by one step and clamped to [0, 1].
inline std::pair<int, int> axis_steps(double lo, double hi) {
    int a = static_cast<int>(std::floor(lo * 20.0 + 1e-9)) - 1;
    int b = static_cast<int>(std::ceil(hi * 20.0 - 1e-9)) + 1;
    a = std::clamp(a, 0, 19);
    b = std::clamp(b, a + 1, 20);
    return {a, b};
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Test raw accuracy on x, test balanced accuracy on y; one polyline per
/// family in first-appearance order, alpha labels at both ends.
inline std::string curve_svg(std::span<const SweepPoint> points) {
    require(!points.empty(), "curve_svg: no points");
    constexpr double left = 80, top = 40, width = 540, height = 500;
    double xmin = 1, xmax = 0, ymin = 1, ymax = 0;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.test.raw_accuracy);
        xmax = std::max(xmax, p.test.raw_accuracy);
        ymin = std::min(ymin, p.test.balanced_accuracy);
        ymax = std::max(ymax, p.test.balanced_accuracy);
    }
    const auto [xa, xb] = detail::axis_steps(xmin, xmax);
    const auto [ya, yb] = detail::axis_steps(ymin, ymax);
    auto px = [&](double v) { return left + (v * 20.0 - xa) / (xb - xa) * width; };
    auto py = [&](double v) { return top + height - (v * 20.0 - ya) / (yb - ya) * height; };
    auto f2 = [](double v) { return format_fixed(v, 2); };

    std::vector<std::string> families;
    for (const auto& p : points)
        if (std::find(families.begin(), families.end(), p.family) == families.end()) families.push_back(p.family);

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 800 600\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
    s += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (int i = xa; i <= xb; ++i) {
        const double x = px(i / 20.0);
        s += "<line x1=\"" + f2(x) + "\" y1=\"" + f2(top) + "\" x2=\"" + f2(x) + "\" y2=\"" + f2(top + height) +
             "\" stroke=\"#e0e0e0\"/>\n";
        s += "<text x=\"" + f2(x) + "\" y=\"" + f2(top + height + 18) + "\" text-anchor=\"middle\">" +
             f2(i / 20.0) + "</text>\n";
    }
    for (int i = ya; i <= yb; ++i) {
        const double y = py(i / 20.0);
        s += "<line x1=\"" + f2(left) + "\" y1=\"" + f2(y) + "\" x2=\"" + f2(left + width) + "\" y2=\"" + f2(y) +
             "\" stroke=\"#e0e0e0\"/>\n";
        s += "<text x=\"" + f2(left - 8) + "\" y=\"" + f2(y + 4) + "\" text-anchor=\"end\">" + f2(i / 20.0) +
             "</text>\n";
    }
    s += "<rect x=\"" + f2(left) + "\" y=\"" + f2(top) + "\" width=\"" + f2(width) + "\" height=\"" + f2(height) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    s += "<text x=\"" + f2(left + width / 2) + "\" y=\"" + f2(top + height + 45) +
         "\" text-anchor=\"middle\">raw accuracy (test)</text>\n";
    s += "<text x=\"20\" y=\"" + f2(top + height / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
         f2(top + height / 2) + ")\">balanced accuracy (test)</text>\n";

    for (std::size_t fi = 0; fi < families.size(); ++fi) {
        const std::string color = detail::kPalette[fi % std::size(detail::kPalette)];
        std::vector<const SweepPoint*> pts;
        for (const auto& p : points)
            if (p.family == families[fi]) pts.push_back(&p);
        s += "<g class=\"family\" data-family=\"" + detail::xml_escape(families[fi]) + "\">\n";
        s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) s += ' ';
            s += f2(px(pts[i]->test.raw_accuracy)) + ',' + f2(py(pts[i]->test.balanced_accuracy));
        }
        s += "\"/>\n";
        for (const auto* p : pts)
            s += "<circle cx=\"" + f2(px(p->test.raw_accuracy)) + "\" cy=\"" + f2(py(p->test.balanced_accuracy)) +
                 "\" r=\"4\" fill=\"" + color + "\"/>\n";
        auto label = [&](const SweepPoint* p) {
            s += "<text x=\"" + f2(px(p->test.raw_accuracy) + 6) + "\" y=\"" + f2(py(p->test.balanced_accuracy) - 6) +
                 "\" fill=\"" + color + "\">&#945;=" + format_shortest(p->alpha) + "</text>\n";
        };
        label(pts.front());
        if (pts.size() > 1) label(pts.back());
        s += "</g>\n";

        const double ly = top + 20 + 20 * static_cast<double>(fi);
        s += "<line x1=\"640\" y1=\"" + f2(ly) + "\" x2=\"670\" y2=\"" + f2(ly) + "\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"676\" y=\"" + f2(ly + 4) + "\">" + detail::xml_escape(families[fi]) + "</text>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

struct CurveFiles {
    std::filesystem::path csv;
    std::filesystem::path svg;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << text;
    out.close();
    if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

/// Writes curve.csv and curve.svg into `out_dir`, creating it if needed.
inline CurveFiles emit_curve(std::span<const SweepPoint> points, const std::filesystem::path& out_dir) {
    if (points.empty()) fail(ErrorKind::InvalidArgument, "emit_curve: no points");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        fail(ErrorKind::Io, "emit_curve: cannot use output directory '" + out_dir.string() + "'");
    CurveFiles files{out_dir / "curve.csv", out_dir / "curve.svg"};
    write_text_file(files.csv, curve_csv(points));
    write_text_file(files.svg, curve_svg(points));
    return files;
}

}  // namespace mandi
