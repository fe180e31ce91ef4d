#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "abstain/evaluation.hpp"

namespace abstain {

struct MapBounds {
  double xmin = 0.0, xmax = 1.0;
  double ymin = 0.0, ymax = 1.0;
};

/// Predictions at the centres of a resolution x resolution grid of cells.
/// labels[row * resolution + col] is the class index or kAbstainCell; row 0
/// is the lowest y.
struct DecisionGrid {
  static constexpr int kAbstainCell = -1;

  MapBounds bounds;
  std::size_t resolution = 0;
  std::vector<int> labels;

  int at(std::size_t row, std::size_t col) const { return labels[row * resolution + col]; }
  /// Input at the centre of a cell.
  Tensor centre(std::size_t row, std::size_t col) const;
};

DecisionGrid sample_decision_grid(const Predictor& predict, const MapBounds& bounds, std::size_t resolution);

struct BandAnalysis {
  bool classes_touch = false;         // two different classes share a cell corner or edge
  std::size_t abstain_components = 0;  // 8-connected
  bool band_between_classes = false;   // no touching, and one abstain component borders every class
};

BandAnalysis analyze_band(const DecisionGrid& grid);

struct RenderOptions {
  MapBounds bounds;
  std::size_t resolution = 200;
  std::size_t pixels = 400;         // side length of the image
  const Dataset* points = nullptr;  // training points drawn on top
  double epsilon = 0.0;             // side / 2 of the squares drawn around points; 0 draws none
};

/// SVG decision map of a two-input classifier. Throws ShapeError for other
/// input sizes. Output is byte-identical for identical inputs.
std::string render_decision_map(const Classifier& clf, const RenderOptions& opts);
std::string render_decision_map(const DecisionGrid& grid, std::size_t num_classes, const RenderOptions& opts);

}  // namespace abstain
