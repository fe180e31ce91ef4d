#include "abstain/render.hpp"

#include <array>
#include <cstdio>
#include <deque>
#include <set>
#include <stdexcept>

#include "abstain/parallel.hpp"

namespace abstain {

Tensor DecisionGrid::centre(std::size_t row, std::size_t col) const {
  const double w = (bounds.xmax - bounds.xmin) / static_cast<double>(resolution);
  const double h = (bounds.ymax - bounds.ymin) / static_cast<double>(resolution);
  return Tensor::vector({static_cast<float>(bounds.xmin + (col + 0.5) * w),
                         static_cast<float>(bounds.ymin + (row + 0.5) * h)});
}

DecisionGrid sample_decision_grid(const Predictor& predict, const MapBounds& bounds, std::size_t resolution) {
  if (resolution == 0) throw std::invalid_argument("decision map resolution must be positive");
  if (!(bounds.xmax > bounds.xmin) || !(bounds.ymax > bounds.ymin)) throw std::invalid_argument("empty map bounds");
  DecisionGrid grid{bounds, resolution, std::vector<int>(resolution * resolution)};
  parallel_for(resolution, [&](std::size_t row) {
    for (std::size_t col = 0; col < resolution; ++col) {
      const Label l = predict(grid.centre(row, col));
      grid.labels[row * resolution + col] =
          l.is_abstain() ? DecisionGrid::kAbstainCell : static_cast<int>(l.index());
    }
  });
  return grid;
}

BandAnalysis analyze_band(const DecisionGrid& grid) {
  const auto n = static_cast<long>(grid.resolution);
  auto inside = [n](long r, long c) { return r >= 0 && c >= 0 && r < n && c < n; };
  auto label = [&](long r, long c) { return grid.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)); };
  BandAnalysis out;
  std::set<int> classes;
  for (long r = 0; r < n; ++r) {
    for (long c = 0; c < n; ++c) {
      const int l = label(r, c);
      if (l == DecisionGrid::kAbstainCell) continue;
      classes.insert(l);
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          if (!inside(r + dr, c + dc)) continue;
          const int m = label(r + dr, c + dc);
          if (m != DecisionGrid::kAbstainCell && m != l) out.classes_touch = true;
        }
      }
    }
  }
  std::vector<char> seen(grid.labels.size(), 0);
  bool some_component_borders_all = false;
  for (long r0 = 0; r0 < n; ++r0) {
    for (long c0 = 0; c0 < n; ++c0) {
      if (label(r0, c0) != DecisionGrid::kAbstainCell || seen[r0 * n + c0]) continue;
      ++out.abstain_components;
      std::set<int> borders;
      std::deque<std::pair<long, long>> queue{{r0, c0}};
      seen[r0 * n + c0] = 1;
      while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        for (long dr = -1; dr <= 1; ++dr) {
          for (long dc = -1; dc <= 1; ++dc) {
            const long rr = r + dr, cc = c + dc;
            if (!inside(rr, cc)) continue;
            const int m = label(rr, cc);
            if (m != DecisionGrid::kAbstainCell) {
              borders.insert(m);
            } else if (!seen[rr * n + cc]) {
              seen[rr * n + cc] = 1;
              queue.emplace_back(rr, cc);
            }
          }
        }
      }
      if (classes.size() >= 2 && borders == classes) some_component_borders_all = true;
    }
  }
  out.band_between_classes = !out.classes_touch && some_component_borders_all;
  return out;
}

namespace {

constexpr std::array<const char*, 10> kPalette{"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                                               "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};
constexpr const char* kAbstainColour = "#d9d9d9";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const char* colour(int label) {
  return label == DecisionGrid::kAbstainCell ? kAbstainColour : kPalette[static_cast<std::size_t>(label) % kPalette.size()];
}

}  // namespace

std::string render_decision_map(const Classifier& clf, const RenderOptions& opts) {
  if (shape_size(clf.input_shape()) != 2) throw ShapeError("decision maps need a classifier with two inputs");
  const DecisionGrid grid = sample_decision_grid(
      [&](const Tensor& x) { return clf.predict(x.reshaped(clf.input_shape())); }, opts.bounds, opts.resolution);
  return render_decision_map(grid, clf.num_classes(), opts);
}

std::string render_decision_map(const DecisionGrid& grid, std::size_t num_classes, const RenderOptions& opts) {
  const double px = static_cast<double>(opts.pixels);
  const double cell = px / static_cast<double>(grid.resolution);
  const MapBounds& b = grid.bounds;
  auto sx = [&](double x) { return (x - b.xmin) / (b.xmax - b.xmin) * px; };
  auto sy = [&](double y) { return px - (y - b.ymin) / (b.ymax - b.ymin) * px; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opts.pixels) + "\" height=\"" +
         std::to_string(opts.pixels) + "\" viewBox=\"0 0 " + std::to_string(opts.pixels) + " " +
         std::to_string(opts.pixels) + "\" shape-rendering=\"crispEdges\">\n";
  svg += "<g id=\"regions\">\n";
  for (std::size_t row = 0; row < grid.resolution; ++row) {
    const double top = px - static_cast<double>(row + 1) * cell;
    for (std::size_t col = 0; col < grid.resolution;) {
      const int l = grid.at(row, col);
      std::size_t end = col + 1;
      while (end < grid.resolution && grid.at(row, end) == l) ++end;
      svg += "<rect x=\"" + fmt(static_cast<double>(col) * cell) + "\" y=\"" + fmt(top) + "\" width=\"" +
             fmt(static_cast<double>(end - col) * cell) + "\" height=\"" + fmt(cell) + "\" fill=\"" + colour(l) +
             "\"/>\n";
      col = end;
    }
  }
  svg += "</g>\n";
  if (opts.points) {
    svg += "<g id=\"points\">\n";
    for (std::size_t i = 0; i < opts.points->size(); ++i) {
      const Tensor& x = opts.points->inputs[i];
      if (x.size() != 2) throw ShapeError("decision map points must be two-dimensional");
      const int l = static_cast<int>(opts.points->labels[i]);
      if (opts.epsilon > 0) {
        const double half = opts.epsilon / (b.xmax - b.xmin) * px;
        svg += "<rect x=\"" + fmt(sx(x[0]) - half) + "\" y=\"" + fmt(sy(x[1]) - half) + "\" width=\"" +
               fmt(2 * half) + "\" height=\"" + fmt(2 * half) + "\" fill=\"none\" stroke=\"" + colour(l) +
               "\" stroke-opacity=\"0.5\" stroke-width=\"0.5\"/>\n";
      }
      svg += "<circle cx=\"" + fmt(sx(x[0])) + "\" cy=\"" + fmt(sy(x[1])) + "\" r=\"2\" fill=\"" + colour(l) +
             "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
    }
    svg += "</g>\n";
  }
  svg += "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (std::size_t c = 0; c <= num_classes; ++c) {
    const bool abstain = c == num_classes;
    const double y = 12.0 + 14.0 * static_cast<double>(c);
    svg += "<rect x=\"6\" y=\"" + fmt(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
           colour(abstain ? DecisionGrid::kAbstainCell : static_cast<int>(c)) + "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
    svg += "<text x=\"20\" y=\"" + fmt(y) + "\">" + (abstain ? std::string("abstain") : "class " + std::to_string(c)) +
           "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace abstain
