#include "normprop/prototypes.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "json.hpp"

namespace normprop {

namespace {

void check_shape(const PrototypeSet& p, const char* who) {
  if (p.num_classes < 2 || p.dim < 2)
    throw std::invalid_argument(std::string(who) + ": need at least 2 classes and 2 dimensions");
  if (p.rows.rows != p.num_classes || p.rows.cols != p.dim)
    throw std::invalid_argument(std::string(who) + ": rows matrix does not match C x d'");
}

double row_dot(const DenseMatrix& m, std::int64_t i, std::int64_t j) {
  double acc = 0.0;
  for (std::int64_t k = 0; k < m.cols; ++k) acc += m(i, k) * m(j, k);
  return acc;
}

}  // namespace

double separation_loss(const PrototypeSet& p) {
  check_shape(p, "separation_loss");
  const std::int64_t c = p.num_classes;
  double total = 0.0;
  for (std::int64_t i = 0; i < c; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < c; ++j) {
      const double entry = row_dot(p.rows, i, j) - (i == j ? 2.0 : 0.0);
      if (entry > best) best = entry;
    }
    total += best;
  }
  return total / static_cast<double>(c);
}

PrototypeSet solve_prototypes(std::int64_t num_classes, std::int64_t dim, std::int64_t iters,
                              double lr, Rng& rng) {
  if (num_classes < 2 || dim < 2)
    throw std::invalid_argument("solve_prototypes: need at least 2 classes and 2 dimensions");
  if (iters < 1) throw std::invalid_argument("solve_prototypes: iters must be at least 1");

  PrototypeSet p;
  p.num_classes = num_classes;
  p.dim = dim;
  p.rows = DenseMatrix(num_classes, dim, 0.0);
  for (double& v : p.rows.data) v = rng.normal();
  p.rows = row_l2_normalize(p.rows).unit;

  DenseMatrix best = p.rows;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(num_classes));

  for (std::int64_t t = 0; t < iters; ++t) {
    // Evaluate the current iterate; the row-wise max also fixes the active
    // pair for the subgradient (first maximizing index on ties).
    double loss = 0.0;
    for (std::int64_t i = 0; i < num_classes; ++i) {
      double hi = -std::numeric_limits<double>::infinity();
      std::int64_t hi_j = 0;
      for (std::int64_t j = 0; j < num_classes; ++j) {
        const double entry = row_dot(p.rows, i, j) - (i == j ? 2.0 : 0.0);
        if (entry > hi) {
          hi = entry;
          hi_j = j;
        }
      }
      argmax[static_cast<std::size_t>(i)] = hi_j;
      loss += hi;
    }
    loss /= static_cast<double>(num_classes);
    if (loss < best_loss) {
      best_loss = loss;
      best = p.rows;
    }

    DenseMatrix grad(num_classes, dim, 0.0);
    const double inv_c = 1.0 / static_cast<double>(num_classes);
    for (std::int64_t i = 0; i < num_classes; ++i) {
      const std::int64_t j = argmax[static_cast<std::size_t>(i)];
      if (i == j) {
        for (std::int64_t k = 0; k < dim; ++k) grad(i, k) += 2.0 * inv_c * p.rows(i, k);
      } else {
        for (std::int64_t k = 0; k < dim; ++k) {
          grad(i, k) += inv_c * p.rows(j, k);
          grad(j, k) += inv_c * p.rows(i, k);
        }
      }
    }

    // Linearly decayed step keeps early progress fast and late iterates from
    // chattering around the optimum.
    const double step = lr * (1.0 - static_cast<double>(t) / static_cast<double>(iters));
    for (std::size_t k = 0; k < p.rows.data.size(); ++k) p.rows.data[k] -= step * grad.data[k];
    p.rows = row_l2_normalize(p.rows).unit;
  }

  p.rows = best;
  return p;
}

double min_pairwise_cosine(const PrototypeSet& p) {
  check_shape(p, "min_pairwise_cosine");
  double lo = std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < p.num_classes; ++i) {
    const double ni = std::sqrt(row_dot(p.rows, i, i));
    for (std::int64_t j = i + 1; j < p.num_classes; ++j) {
      const double nj = std::sqrt(row_dot(p.rows, j, j));
      const double cosine = row_dot(p.rows, i, j) / (ni * nj);
      if (cosine < lo) lo = cosine;
    }
  }
  return lo;
}

PrototypeSet load_prototypes(const std::string& path) {
  const std::string context = "prototype file " + path;
  std::ifstream in(path);
  if (!in) throw DataError(context + ": cannot open for reading");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(context + ": " + e.what());
  }

  if (!j.contains("num_classes") || !j["num_classes"].is_number_integer())
    throw DataError(context + ": missing or non-integer field \"num_classes\"");
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    throw DataError(context + ": missing or non-integer field \"dim\"");

  PrototypeSet p;
  p.num_classes = j["num_classes"].get<std::int64_t>();
  p.dim = j["dim"].get<std::int64_t>();
  if (p.num_classes < 2 || p.dim < 2)
    throw DataError(context + ": num_classes and dim must both be at least 2");

  if (!j.contains("rows") || !j["rows"].is_array() ||
      static_cast<std::int64_t>(j["rows"].size()) != p.num_classes)
    throw DataError(context + ": \"rows\" must be an array with one row per class");
  p.rows = DenseMatrix(p.num_classes, p.dim, 0.0);
  for (std::int64_t i = 0; i < p.num_classes; ++i) {
    const auto& row = j["rows"][static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<std::int64_t>(row.size()) != p.dim)
      throw DataError(context + ": rows entry " + std::to_string(i) + " must hold " +
                      std::to_string(p.dim) + " numbers");
    for (std::int64_t k = 0; k < p.dim; ++k) {
      const auto& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number())
        throw DataError(context + ": rows entry " + std::to_string(i) + " must be numeric");
      p.rows(i, k) = v.get<double>();
    }
  }

  for (std::int64_t i = 0; i < p.num_classes; ++i) {
    const double norm = std::sqrt(row_dot(p.rows, i, i));
    if (std::abs(norm - 1.0) > 1e-6)
      throw DataError(context + ": row " + std::to_string(i) + " has norm " +
                      std::to_string(norm) + " but prototypes must be unit vectors");
  }
  return p;
}

void save_prototypes(const PrototypeSet& p, const std::string& path) {
  check_shape(p, "save_prototypes");
  nlohmann::ordered_json j;
  j["num_classes"] = p.num_classes;
  j["dim"] = p.dim;
  j["rows"] = nlohmann::ordered_json::array();
  for (std::int64_t i = 0; i < p.num_classes; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::int64_t k = 0; k < p.dim; ++k) row.push_back(p.rows(i, k));
    j["rows"].push_back(std::move(row));
  }
  std::ofstream out(path);
  if (!out) throw DataError("prototype file " + path + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

}  // namespace normprop
