#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "perfnet/contournet.hpp"
#include "perfnet/dataset.hpp"
#include "perfnet/loss.hpp"
#include "perfnet/model.hpp"
#include "perfnet/texturenet.hpp"

namespace perfnet {

/// Mean over frames of the RMS over bins of log(1+pred) - log(1+target).
template <typename T>
double log_spectral_distance(const Matrix<T>& pred, const Matrix<T>& target) {
  loss_detail::check_shapes(pred, target);
  if (pred.cols() == 0 || pred.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < pred.cols(); ++t) {
    double acc = 0.0;
    for (std::size_t f = 0; f < pred.rows(); ++f) {
      const double d = std::log1p(static_cast<double>(pred(f, t))) - std::log1p(static_cast<double>(target(f, t)));
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(pred.rows()));
  }
  return total / static_cast<double>(pred.cols());
}

/// L2 norm of log(1+pred) - log(1+target) over rows [begin, end) and all frames.
template <typename T>
double log_spectral_l2(const Matrix<T>& pred, const Matrix<T>& target, BandRange rows) {
  loss_detail::check_shapes(pred, target);
  if (rows.end > pred.rows() || rows.begin > rows.end)
    throw ShapeMismatch("band [" + std::to_string(rows.begin) + ", " + std::to_string(rows.end) + ") outside " +
                        std::to_string(pred.rows()) + " rows");
  double acc = 0.0;
  for (std::size_t f = rows.begin; f < rows.end; ++f)
    for (std::size_t t = 0; t < pred.cols(); ++t) {
      const double d = std::log1p(static_cast<double>(pred(f, t))) - std::log1p(static_cast<double>(target(f, t)));
      acc += d * d;
    }
  return std::sqrt(acc);
}

template <typename T>
double log_spectral_l2(const Matrix<T>& pred, const Matrix<T>& target) {
  return log_spectral_l2(pred, target, BandRange{0, pred.rows()});
}

struct EvalRow {
  std::string source;
  std::string label;
  std::size_t frames = 0;
  double lsd_coarse = 0.0;
  double lsd = 0.0;  // refined output
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_lsd = 0.0;
  double mean_lsd_coarse = 0.0;
};

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& ds) {
  EvalReport r;
  for (const auto& p : ds.pairs) {
    const auto out = model_forward(model, roll_to_input<T>(p.roll), p.label);
    const auto target = p.target.template cast<T>();
    r.rows.push_back({p.source, ds.labels[p.label], p.frames(), log_spectral_distance(out.coarse, target),
                      log_spectral_distance(out.refined, target)});
    r.mean_lsd += r.rows.back().lsd;
    r.mean_lsd_coarse += r.rows.back().lsd_coarse;
  }
  if (!r.rows.empty()) {
    r.mean_lsd /= static_cast<double>(r.rows.size());
    r.mean_lsd_coarse /= static_cast<double>(r.rows.size());
  }
  return r;
}

}  // namespace perfnet
