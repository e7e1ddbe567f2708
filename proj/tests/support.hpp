#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "contramod/dataio.hpp"
#include "contramod/nn/params.hpp"
#include "contramod/nn/tape.hpp"
#include "contramod/rng.hpp"

namespace testing {

using namespace contramod;

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("contramod-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline IQFrame random_frame(std::size_t length, CounterRng& rng) {
  IQFrame f(length);
  for (float& v : f.values()) v = static_cast<float>(rng.normal());
  return f;
}

inline nn::Mat<double> random_mat(Eigen::Index rows, Eigen::Index cols, CounterRng& rng, double scale = 1.0) {
  nn::Mat<double> m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = scale * rng.normal();
  return m;
}

/// Largest |a - n| / max(|a| + |n|, floor) over all entries, the usual
/// symmetric relative error with a floor for near-zero gradients.
inline double rel_error(const nn::Mat<double>& analytic, const nn::Mat<double>& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double a = analytic.data()[k];
    const double n = numeric.data()[k];
    worst = std::max(worst, std::abs(a - n) / std::max(std::abs(a) + std::abs(n), floor));
  }
  return worst;
}

/// Builds a scalar loss on a tape. `inputs` holds the tape input values that
/// are differentiated alongside every parameter.
using ScalarGraph = std::function<nn::Var(nn::Tape<double>&, const std::vector<nn::Var>&)>;

struct GradcheckInput {
  nn::Mat<double> value;
  std::size_t batch = 1;
};

/// Compares tape gradients with central differences for every parameter and
/// input entry; returns the worst relative error.
inline double gradcheck(nn::ParameterTree<double>& params, std::vector<GradcheckInput> inputs, const ScalarGraph& graph,
                        double h = 1e-5) {
  auto evaluate = [&](bool with_grad, nn::GradBuffer<double>* grads, std::vector<nn::Mat<double>>* input_grads) {
    nn::Tape<double> tape(params);
    std::vector<nn::Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.input(in.value, in.batch, true));
    const nn::Var loss = graph(tape, vars);
    const double value = tape.value(loss)(0, 0);
    if (with_grad) {
      tape.backward(loss, *grads);
      for (std::size_t k = 0; k < vars.size(); ++k) {
        const auto& g = tape.grad(vars[k]);
        input_grads->push_back(g.size() ? g : nn::Mat<double>::Zero(inputs[k].value.rows(), inputs[k].value.cols()));
      }
    }
    return value;
  };

  nn::GradBuffer<double> grads(params.size());
  std::vector<nn::Mat<double>> input_grads;
  evaluate(true, &grads, &input_grads);

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& value = params[nn::ParamId{p}].value;
    nn::Mat<double> numeric(value.rows(), value.cols());
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + h;
      const double up = evaluate(false, nullptr, nullptr);
      value.data()[k] = saved - h;
      const double down = evaluate(false, nullptr, nullptr);
      value.data()[k] = saved;
      numeric.data()[k] = (up - down) / (2 * h);
    }
    const nn::ParamId id{p};
    const nn::Mat<double> analytic = grads.has(id) ? grads[id] : nn::Mat<double>::Zero(value.rows(), value.cols());
    worst = std::max(worst, rel_error(analytic, numeric));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& value = inputs[i].value;
    nn::Mat<double> numeric(value.rows(), value.cols());
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + h;
      const double up = evaluate(false, nullptr, nullptr);
      value.data()[k] = saved - h;
      const double down = evaluate(false, nullptr, nullptr);
      value.data()[k] = saved;
      numeric.data()[k] = (up - down) / (2 * h);
    }
    worst = std::max(worst, rel_error(input_grads[i], numeric));
  }
  return worst;
}

}  // namespace testing
