#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "feq/errors.hpp"

namespace feq {

using Index = std::int64_t;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;
using Triplet = Eigen::Triplet<double, std::int64_t>;

/// A natural boundary contribution: `flux` integrated against the shape
/// functions of `nodes` (one node in 1D, an edge's two nodes in 2D).
struct NeumannSegment {
  std::vector<Index> nodes;
  double flux = 0.0;
  double length = 1.0;  // measure of the segment; unused for point segments
};

struct BoundarySpec {
  std::map<Index, double> dirichlet;  // node -> prescribed value u_g
  std::vector<NeumannSegment> neumann;

  bool is_dirichlet(Index node) const { return dirichlet.count(node) != 0; }

  void validate(Index node_count) const {
    for (const auto& [node, value] : dirichlet) {
      if (node < 0 || node >= node_count)
        throw InvalidArgument("dirichlet node " + std::to_string(node) + " out of range");
      if (!std::isfinite(value))
        throw InvalidArgument("non-finite dirichlet value at node " + std::to_string(node));
    }
    for (const auto& seg : neumann) {
      if (seg.nodes.empty()) throw InvalidArgument("empty neumann segment");
      for (Index node : seg.nodes) {
        if (node < 0 || node >= node_count)
          throw InvalidArgument("neumann node " + std::to_string(node) + " out of range");
        if (is_dirichlet(node) && seg.nodes.size() == 1)
          throw InvalidArgument("node " + std::to_string(node) + " is both dirichlet and neumann");
      }
      // An edge may touch a dirichlet corner; it must not lie entirely on the dirichlet boundary.
      bool all_dirichlet = true;
      for (Index node : seg.nodes) all_dirichlet = all_dirichlet && is_dirichlet(node);
      if (all_dirichlet && seg.nodes.size() > 1)
        throw InvalidArgument("neumann segment lies on the dirichlet boundary");
    }
  }
};

/// Discretized problem A u = b with Dirichlet rows lifted: every Dirichlet
/// row/column of A is the identity and b carries the prescribed value there.
/// The same values are kept in `boundary` so that search frames can drop
/// those dofs.
struct LinearSystem {
  SparseMatrix A;
  Vector b;
  BoundarySpec boundary;
  bool spd = false;

  Index size() const { return static_cast<Index>(b.size()); }

  std::vector<bool> dirichlet_mask() const {
    std::vector<bool> mask(static_cast<std::size_t>(size()), false);
    for (const auto& [node, value] : boundary.dirichlet) mask[static_cast<std::size_t>(node)] = true;
    return mask;
  }

  /// Global indices of the non-Dirichlet dofs, ascending.
  std::vector<Index> active_dofs() const {
    std::vector<Index> active;
    for (Index k = 0; k < size(); ++k)
      if (!boundary.is_dirichlet(k)) active.push_back(k);
    return active;
  }

  /// Zero vector with the Dirichlet values written in.
  Vector initial_guess() const {
    Vector u = Vector::Zero(size());
    for (const auto& [node, value] : boundary.dirichlet) u[node] = value;
    return u;
  }
};

inline bool is_symmetric(const SparseMatrix& A, double rel_tol = 1e-12) {
  if (A.rows() != A.cols()) return false;
  SparseMatrix At = A.transpose();
  SparseMatrix diff = A - At;
  double scale = 0.0;
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  double worst = 0.0;
  for (Index k = 0; k < diff.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(diff, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return worst <= rel_tol * std::max(scale, 1.0);
}

/// Folds Dirichlet values into b and replaces the constrained rows and
/// columns of A by identity rows. Idempotent.
inline LinearSystem make_system(const SparseMatrix& A_raw, const Vector& b_raw, BoundarySpec boundary,
                                bool spd) {
  const Index n = A_raw.rows();
  if (A_raw.cols() != n || b_raw.size() != n)
    throw InvalidArgument("inconsistent system dimensions");
  boundary.validate(n);
  for (Index k = 0; k < b_raw.size(); ++k)
    if (!std::isfinite(b_raw[k])) throw InvalidArgument("non-finite load vector entry");

  Vector b = b_raw;
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(A_raw.nonZeros()));
  for (Index row = 0; row < A_raw.outerSize(); ++row) {
    const bool row_fixed = boundary.is_dirichlet(row);
    for (SparseMatrix::InnerIterator it(A_raw, row); it; ++it) {
      const Index col = it.col();
      const auto fixed = boundary.dirichlet.find(col);
      if (row_fixed) continue;
      if (fixed != boundary.dirichlet.end()) {
        b[row] -= it.value() * fixed->second;
        continue;
      }
      triplets.emplace_back(row, col, it.value());
    }
  }
  for (const auto& [node, value] : boundary.dirichlet) {
    triplets.emplace_back(node, node, 1.0);
    b[node] = value;
  }
  LinearSystem sys;
  sys.A.resize(n, n);
  sys.A.setFromTriplets(triplets.begin(), triplets.end());
  sys.A.makeCompressed();
  sys.b = std::move(b);
  sys.boundary = std::move(boundary);
  sys.spd = spd;
  return sys;
}

inline Vector residual(const LinearSystem& sys, const Vector& u) {
  if (u.size() != sys.size()) throw InvalidArgument("residual: dimension mismatch");
  return sys.A * u - sys.b;
}

/// ||A u - b||_2
inline double residual_norm(const LinearSystem& sys, const Vector& u) { return residual(sys, u).norm(); }

enum class Functional { Energy, LeastSquares };

inline const char* to_string(Functional f) { return f == Functional::Energy ? "F" : "G"; }

/// F(u) = 1/2 u^T A u - u^T b, or the squared residual ||A u - b||^2.
inline double functional_eval(const LinearSystem& sys, const Vector& u, Functional which) {
  if (u.size() != sys.size()) throw InvalidArgument("functional_eval: dimension mismatch");
  if (which == Functional::Energy) {
    Vector Au = sys.A * u;
    return 0.5 * u.dot(Au) - u.dot(sys.b);
  }
  return (sys.A * u - sys.b).squaredNorm();
}

inline Vector direct_solve(const LinearSystem& sys) {
  if (sys.size() == 0) return Vector{};
  if (sys.spd) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(Eigen::SparseMatrix<double>(sys.A));
    if (ldlt.info() != Eigen::Success) throw InvalidArgument("direct_solve: factorization failed");
    return ldlt.solve(sys.b);
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(Eigen::SparseMatrix<double>(sys.A));
  if (lu.info() != Eigen::Success) throw InvalidArgument("direct_solve: matrix is singular");
  return lu.solve(sys.b);
}

/// Dense copy of A restricted to the given rows/columns.
inline DenseMatrix dense_block(const SparseMatrix& A, const std::vector<Index>& rows,
                               const std::vector<Index>& cols) {
  std::vector<Index> col_pos(static_cast<std::size_t>(A.cols()), -1);
  for (std::size_t k = 0; k < cols.size(); ++k) col_pos[static_cast<std::size_t>(cols[k])] = static_cast<Index>(k);
  DenseMatrix out = DenseMatrix::Zero(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (SparseMatrix::InnerIterator it(A, rows[r]); it; ++it) {
      const Index c = col_pos[static_cast<std::size_t>(it.col())];
      if (c >= 0) out(static_cast<Index>(r), c) = it.value();
    }
  return out;
}

/// Smallest eigenvalue of the free-dof block (dense, small systems only).
inline double min_free_eigenvalue(const LinearSystem& sys) {
  const auto active = sys.active_dofs();
  if (active.empty()) return 0.0;
  DenseMatrix K = dense_block(sys.A, active, active);
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(0.5 * (K + K.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const LinearSystem& sys) {
  nlohmann::json j;
  j["n"] = sys.size();
  auto& trip = j["triplets"] = nlohmann::json::array();
  for (Index row = 0; row < sys.A.outerSize(); ++row)
    for (SparseMatrix::InnerIterator it(sys.A, row); it; ++it)
      trip.push_back({it.row(), it.col(), it.value()});
  j["b"] = std::vector<double>(sys.b.data(), sys.b.data() + sys.b.size());
  auto& dir = j["dirichlet"] = nlohmann::json::array();
  for (const auto& [node, value] : sys.boundary.dirichlet) dir.push_back({node, value});
  j["spd"] = sys.spd;
  return j;
}

/// Reads {n, triplets, b, dirichlet[, spd]}. The Dirichlet lift is reapplied,
/// so files holding an unlifted matrix are accepted too. When "spd" is
/// absent it is detected (symmetry plus a successful Cholesky).
inline LinearSystem system_from_json(const nlohmann::json& j) {
  try {
    const Index n = j.at("n").get<Index>();
    if (n < 0) throw InvalidArgument("negative system size");
    std::vector<Triplet> triplets;
    for (const auto& t : j.at("triplets")) {
      if (!t.is_array() || t.size() != 3) throw InvalidArgument("triplet must be [i, j, v]");
      const Index r = t[0].get<Index>(), c = t[1].get<Index>();
      if (r < 0 || r >= n || c < 0 || c >= n) throw InvalidArgument("triplet index out of range");
      triplets.emplace_back(r, c, t[2].get<double>());
    }
    SparseMatrix A(n, n);
    A.setFromTriplets(triplets.begin(), triplets.end());
    const auto bvals = j.at("b").get<std::vector<double>>();
    if (static_cast<Index>(bvals.size()) != n) throw InvalidArgument("b has wrong length");
    Vector b = Eigen::Map<const Vector>(bvals.data(), n);
    BoundarySpec boundary;
    if (j.contains("dirichlet"))
      for (const auto& d : j.at("dirichlet")) boundary.dirichlet[d.at(0).get<Index>()] = d.at(1).get<double>();
    bool spd = false;
    if (j.contains("spd")) {
      spd = j.at("spd").get<bool>();
      return make_system(A, b, boundary, spd);
    }
    LinearSystem sys = make_system(A, b, boundary, false);
    if (is_symmetric(sys.A)) {
      Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(Eigen::SparseMatrix<double>(sys.A));
      sys.spd = llt.info() == Eigen::Success;
    }
    return sys;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed system document: ") + e.what());
  }
}

/// Coordinate Matrix Market for A. Indices are written 0-based.
inline void write_matrix_market(std::ostream& out, const SparseMatrix& A) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << "% 0-based indices\n";
  out << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
  out.precision(17);
  for (Index row = 0; row < A.outerSize(); ++row)
    for (SparseMatrix::InnerIterator it(A, row); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

inline SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0)
    throw InvalidArgument("missing MatrixMarket banner");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (format != "coordinate") throw InvalidArgument("only coordinate MatrixMarket is supported");
  const bool symmetric = symmetry == "symmetric";
  do {
    if (!std::getline(in, line)) throw InvalidArgument("truncated MatrixMarket header");
  } while (!line.empty() && line[0] == '%');
  std::istringstream dims(line);
  Index rows = 0, cols = 0, nnz = 0;
  if (!(dims >> rows >> cols >> nnz)) throw InvalidArgument("bad MatrixMarket size line");
  std::vector<Triplet> triplets;
  for (Index k = 0; k < nnz; ++k) {
    Index r = 0, c = 0;
    double v = 0.0;
    if (!(in >> r >> c >> v)) throw InvalidArgument("truncated MatrixMarket entries");
    if (r < 0 || r >= rows || c < 0 || c >= cols) throw InvalidArgument("MatrixMarket index out of range");
    triplets.emplace_back(r, c, v);
    if (symmetric && r != c) triplets.emplace_back(c, r, v);
  }
  SparseMatrix A(rows, cols);
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

inline void save_system(const std::string& path, const LinearSystem& sys) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << to_json(sys).dump(1) << '\n';
}

inline LinearSystem load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed system file " + path + ": " + e.what());
  }
  return system_from_json(j);
}

}  // namespace feq
