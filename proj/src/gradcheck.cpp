#include "feat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "feat/autodiff.hpp"
#include "feat/io.hpp"
#include "feat/mlp.hpp"

namespace feat {

namespace {

constexpr double kStep = 1e-5;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(gen);
  return m;
}

double rel_error(const Matrix& a, const Matrix& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

// Builds a scalar from the parameters on a tape; returns the root.
using Builder = std::function<ad::NodeId(ad::Tape&, const std::vector<ad::NodeId>&)>;

double worst_error(const std::vector<Matrix>& params, const Builder& build) {
  ad::Tape tape;
  std::vector<ad::NodeId> leaves;
  for (const auto& p : params) leaves.push_back(tape.parameter(p));
  const ad::NodeId root = build(tape, leaves);
  tape.backward(root);

  auto evaluate = [&](const std::vector<Matrix>& ps) {
    ad::Tape t;
    std::vector<ad::NodeId> ls;
    for (const auto& p : ps) ls.push_back(t.constant(p));
    return t.scalar(build(t, ls));
  };

  double worst = 0.0;
  std::vector<Matrix> probe = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix fd(params[k].rows(), params[k].cols());
    for (Eigen::Index i = 0; i < params[k].size(); ++i) {
      const double orig = probe[k].data()[i];
      probe[k].data()[i] = orig + kStep;
      const double up = evaluate(probe);
      probe[k].data()[i] = orig - kStep;
      const double down = evaluate(probe);
      probe[k].data()[i] = orig;
      fd.data()[i] = (up - down) / (2.0 * kStep);
    }
    const Matrix& g = tape.gradient(leaves[k]);
    const Matrix ad_grad = g.size() ? g : Matrix::Zero(fd.rows(), fd.cols());
    worst = std::max(worst, rel_error(ad_grad, fd));
  }
  return worst;
}

// Contracts a matrix node with fixed random weights so every entry matters.
ad::NodeId contract(ad::Tape& t, ad::NodeId x, const Matrix& weights) {
  return t.sum(t.hadamard(x, t.constant(weights)));
}

}  // namespace

std::vector<GradCheckRow> check_autodiff(int trials, std::uint64_t seed, double tolerance) {
  struct Case {
    std::string name;
    std::function<std::vector<Matrix>(std::mt19937_64&)> params;
    std::function<Builder(std::mt19937_64&)> builder;
  };
  auto two = [](Eigen::Index r, Eigen::Index c) {
    return [r, c](std::mt19937_64& g) { return std::vector<Matrix>{random_matrix(r, c, g), random_matrix(r, c, g)}; };
  };
  auto one = [](Eigen::Index r, Eigen::Index c) {
    return [r, c](std::mt19937_64& g) { return std::vector<Matrix>{random_matrix(r, c, g)}; };
  };
  auto with_weights = [](Eigen::Index r, Eigen::Index c,
                         std::function<ad::NodeId(ad::Tape&, const std::vector<ad::NodeId>&)> body) {
    return [r, c, body](std::mt19937_64& g) -> Builder {
      const Matrix w = random_matrix(r, c, g);
      return [w, body](ad::Tape& t, const std::vector<ad::NodeId>& l) { return contract(t, body(t, l), w); };
    };
  };

  std::vector<Case> cases;
  cases.push_back({"affine",
                   [](std::mt19937_64& g) {
                     return std::vector<Matrix>{random_matrix(3, 4, g), random_matrix(3, 1, g), random_matrix(4, 5, g)};
                   },
                   with_weights(3, 5, [](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                     return t.affine(l[0], l[1], l[2]);
                   })});
  for (auto act : {ad::Activation::kGelu, ad::Activation::kSoftplus, ad::Activation::kTanh}) {
    cases.push_back({std::string("activation-") + std::string(ad::activation_name(act)), one(3, 4),
                     with_weights(3, 4, [act](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                       return t.activation(l[0], act);
                     })});
  }
  cases.push_back({"add", two(3, 4), with_weights(3, 4, [](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                     return t.add(l[0], l[1]);
                   })});
  cases.push_back({"sub", two(3, 4), with_weights(3, 4, [](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                     return t.sub(l[0], l[1]);
                   })});
  cases.push_back({"hadamard", two(3, 4), with_weights(3, 4, [](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                     return t.hadamard(l[0], l[1]);
                   })});
  cases.push_back({"square", one(3, 4), with_weights(3, 4, [](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                     return t.square(l[0]);
                   })});
  cases.push_back({"sum", one(3, 4), [](std::mt19937_64&) -> Builder {
                     return [](ad::Tape& t, const std::vector<ad::NodeId>& l) { return t.sum(t.square(l[0])); };
                   }});
  cases.push_back({"mean", one(3, 4), [](std::mt19937_64&) -> Builder {
                     return [](ad::Tape& t, const std::vector<ad::NodeId>& l) { return t.mean(t.square(l[0])); };
                   }});
  cases.push_back({"scale", one(3, 4), [](std::mt19937_64& g) -> Builder {
                     const double s = std::normal_distribution<double>(0.0, 2.0)(g);
                     const Matrix w = random_matrix(3, 4, g);
                     return [s, w](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                       return contract(t, t.scale(l[0], s), w);
                     };
                   }});
  cases.push_back({"scale-columns", one(3, 4), [](std::mt19937_64& g) -> Builder {
                     const Vector cw = random_matrix(4, 1, g);
                     const Matrix w = random_matrix(3, 4, g);
                     return [cw, w](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                       return contract(t, t.scale_columns(l[0], cw), w);
                     };
                   }});
  cases.push_back({"mlp-2-layer",
                   [](std::mt19937_64& g) {
                     const Mlp net = Mlp::random({3 + kTimeEmbeddingWidth, 6, 3}, ad::Activation::kGelu, g());
                     std::vector<Matrix> ps;
                     for (const auto& layer : net.layers()) {
                       ps.push_back(layer.weight);
                       ps.push_back(layer.bias);
                     }
                     return ps;
                   },
                   [](std::mt19937_64& g) -> Builder {
                     Vector times(5);
                     for (int j = 0; j < 5; ++j) times(j) = std::uniform_real_distribution<double>(0.0, 1.0)(g);
                     const Matrix in = embed_inputs(random_matrix(3, 5, g), times);
                     const Matrix target = random_matrix(3, 5, g);
                     return [in, target](ad::Tape& t, const std::vector<ad::NodeId>& l) {
                       ad::NodeId h = t.affine(l[0], l[1], t.constant(in));
                       h = t.activation(h, ad::Activation::kGelu);
                       h = t.affine(l[2], l[3], h);
                       return t.mean(t.square(t.sub(h, t.constant(target))));
                     };
                   }});

  std::vector<GradCheckRow> rows;
  std::mt19937_64 gen(seed);
  for (const auto& c : cases) {
    GradCheckRow row{c.name, trials, 0.0, tolerance};
    for (int k = 0; k < trials; ++k) {
      const auto params = c.params(gen);
      const Builder b = c.builder(gen);
      row.max_rel_error = std::max(row.max_rel_error, worst_error(params, b));
    }
    rows.push_back(row);
  }
  return rows;
}

GradCheckRow check_energy_gradient(const std::string& name, const EnergyFunction& sys, const VectorRef& center,
                                   double spread, int trials, std::uint64_t seed, double tolerance) {
  require_dim(center.size(), sys.dim(), "gradient check center");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, spread);
  GradCheckRow row{name, trials, 0.0, tolerance};
  Vector x(sys.dim());
  for (int k = 0; k < trials; ++k) {
    for (int attempt = 0;; ++attempt) {
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = center(i) + normal(gen);
      if (std::isfinite(sys.energy(x))) break;
      if (attempt > 1000) throw NumericalError("no admissible point found for " + name);
    }
    const Vector g = sys.gradient(x);
    Vector fd(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double h = kStep * std::max(1.0, std::abs(x(i)));
      probe(i) = x(i) + h;
      const double up = sys.energy(probe);
      probe(i) = x(i) - h;
      const double down = sys.energy(probe);
      probe(i) = x(i);
      fd(i) = (up - down) / (2.0 * h);
    }
    row.max_rel_error = std::max(row.max_rel_error, rel_error(g, fd));
  }
  return row;
}

std::string format_gradcheck(const std::vector<GradCheckRow>& rows) {
  std::ostringstream out;
  out << "check,trials,max_rel_error,tolerance,status\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.trials << ',' << io::format_real(r.max_rel_error) << ',' << io::format_real(r.tolerance)
        << ',' << (r.pass() ? "pass" : "fail") << '\n';
  }
  return out.str();
}

}  // namespace feat
