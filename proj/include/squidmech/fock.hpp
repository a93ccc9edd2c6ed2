#pragma once

#include "squidmech/error.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace squidmech {

using cplx = std::complex<double>;
using SparseOp = Eigen::SparseMatrix<cplx>;
using DenseOp = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

// =============================================================================
// Space descriptor
// =============================================================================

/// Ordered tensor-product structure. The canonical circuit space is
/// (q1, q2, m): qubit 1, qubit 2, phonon mode.
struct SpaceDescriptor {
    std::vector<int> dims;
    std::vector<std::string> labels;

    int total() const {
        return std::accumulate(dims.begin(), dims.end(), 1, [](int a, int b) { return a * b; });
    }

    std::size_t slot(const std::string& label) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return i;
        throw ParameterError("unknown subsystem label '" + label + "'");
    }

    int dim(const std::string& label) const { return dims[slot(label)]; }

    void validate() const {
        if (dims.empty() || dims.size() != labels.size())
            throw ParameterError("space descriptor needs one label per subsystem");
        for (int d : dims)
            if (d < 2) throw ParameterError("every subsystem dimension must be at least 2");
    }

    bool operator==(const SpaceDescriptor& o) const { return dims == o.dims && labels == o.labels; }
    bool operator!=(const SpaceDescriptor& o) const { return !(*this == o); }
};

inline SpaceDescriptor single_mode_space(int dim, const std::string& label = "m") {
    SpaceDescriptor s{{dim}, {label}};
    s.validate();
    return s;
}

/// Canonical circuit space (q1, q2, m).
inline SpaceDescriptor circuit_space(int phonon_dim, int qubit_dim = 3) {
    SpaceDescriptor s{{qubit_dim, qubit_dim, phonon_dim}, {"q1", "q2", "m"}};
    s.validate();
    return s;
}

/// Flat index of a product basis state given one level per label.
inline int basis_index(const SpaceDescriptor& space, const std::map<std::string, int>& levels) {
    if (levels.size() != space.dims.size())
        throw ParameterError("basis_index: a level is required for every subsystem");
    int idx = 0;
    for (std::size_t k = 0; k < space.dims.size(); ++k) {
        auto it = levels.find(space.labels[k]);
        if (it == levels.end()) throw ParameterError("basis_index: missing level for '" + space.labels[k] + "'");
        if (it->second < 0 || it->second >= space.dims[k])
            throw ParameterError("basis_index: level out of range for '" + space.labels[k] + "'");
        idx = idx * space.dims[k] + it->second;
    }
    return idx;
}

/// Levels of each subsystem for a flat index.
inline std::vector<int> basis_levels(const SpaceDescriptor& space, int index) {
    std::vector<int> lv(space.dims.size());
    for (std::size_t k = space.dims.size(); k-- > 0;) {
        lv[k] = index % space.dims[k];
        index /= space.dims[k];
    }
    return lv;
}

/// Human-readable label. Circuit states use the |n1 n_m n2> ordering,
/// written as "|0_1 0_m 1_2>".
inline std::string basis_label(const SpaceDescriptor& space, int index) {
    const auto lv = basis_levels(space, index);
    std::string s = "|";
    if (space.labels == std::vector<std::string>{"q1", "q2", "m"}) {
        s += std::to_string(lv[0]) + "_1 " + std::to_string(lv[2]) + "_m " + std::to_string(lv[1]) + "_2";
    } else {
        for (std::size_t k = 0; k < lv.size(); ++k) {
            if (k) s += " ";
            s += std::to_string(lv[k]) + "_" + space.labels[k];
        }
    }
    return s + ">";
}

// =============================================================================
// Operators
// =============================================================================

/// Complex operator on a tensor-product space, stored sparse.
struct OperatorMatrix {
    SpaceDescriptor space;
    SparseOp sparse;
    bool hermitian_hint = false;

    int dim() const { return static_cast<int>(sparse.rows()); }
    DenseOp dense() const { return DenseOp(sparse); }
    OperatorMatrix adjoint() const { return {space, SparseOp(sparse.adjoint()), hermitian_hint}; }
};

inline OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.space != b.space) throw ParameterError("operator product across different spaces");
    SparseOp p = (a.sparse * b.sparse).pruned();
    return {a.space, p, false};
}

inline OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.space != b.space) throw ParameterError("operator sum across different spaces");
    return {a.space, SparseOp(a.sparse + b.sparse), a.hermitian_hint && b.hermitian_hint};
}

inline OperatorMatrix operator*(cplx s, const OperatorMatrix& a) {
    return {a.space, SparseOp(s * a.sparse), a.hermitian_hint && s.imag() == 0.0};
}

inline SparseOp sparse_identity(int dim) {
    SparseOp I(dim, dim);
    I.setIdentity();
    return I;
}

/// Lowering operator on a single mode: <n-1|a|n> = sqrt(n).
inline OperatorMatrix destroy(int dim) {
    if (dim < 2) throw ParameterError("destroy: dimension must be at least 2");
    SparseOp a(dim, dim);
    std::vector<Eigen::Triplet<cplx>> t;
    for (int n = 1; n < dim; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
    a.setFromTriplets(t.begin(), t.end());
    return {single_mode_space(dim, "mode"), a, false};
}

inline OperatorMatrix number(int dim) {
    const auto a = destroy(dim);
    auto n = a.adjoint() * a;
    n.hermitian_hint = true;
    return n;
}

inline OperatorMatrix identity(int dim) {
    return {single_mode_space(dim, "mode"), sparse_identity(dim), true};
}

/// Single-mode operator built from a dense matrix.
inline OperatorMatrix single_mode_operator(const DenseOp& m, bool hermitian = false) {
    if (m.rows() != m.cols()) throw ParameterError("single_mode_operator: matrix must be square");
    return {single_mode_space(static_cast<int>(m.rows()), "mode"), m.sparseView(), hermitian};
}

inline SparseOp kron(const SparseOp& a, const SparseOp& b) {
    SparseOp out(a.rows() * b.rows(), a.cols() * b.cols());
    std::vector<Eigen::Triplet<cplx>> t;
    t.reserve(static_cast<std::size_t>(a.nonZeros() * b.nonZeros()));
    for (int ka = 0; ka < a.outerSize(); ++ka)
        for (SparseOp::InnerIterator ia(a, ka); ia; ++ia)
            for (int kb = 0; kb < b.outerSize(); ++kb)
                for (SparseOp::InnerIterator ib(b, kb); ib; ++ib)
                    t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                                   ia.value() * ib.value());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

/// Lift a single-mode operator into slot `slot` of `space` (identity elsewhere).
inline OperatorMatrix embed(const OperatorMatrix& op, std::size_t slot, const SpaceDescriptor& space) {
    space.validate();
    if (slot >= space.dims.size()) throw ParameterError("embed: slot out of range");
    if (op.dim() != space.dims[slot]) throw ParameterError("embed: operator dimension does not match slot");
    SparseOp acc = sparse_identity(1);
    for (std::size_t k = 0; k < space.dims.size(); ++k)
        acc = kron(acc, k == slot ? op.sparse : sparse_identity(space.dims[k]));
    return {space, acc, op.hermitian_hint};
}

inline OperatorMatrix embed(const OperatorMatrix& op, const std::string& label, const SpaceDescriptor& space) {
    return embed(op, space.slot(label), space);
}

/// Identity on a full space.
inline OperatorMatrix identity(const SpaceDescriptor& space) {
    return {space, sparse_identity(space.total()), true};
}

/// Single-mode matrix of (a + a†)^k, computed in an enlarged space so that
/// every retained element equals its untruncated value.
inline DenseOp quadrature_power(int dim, int k) {
    const int big = dim + k + 1;
    const DenseOp a = destroy(big).dense();
    const DenseOp x = a + a.adjoint();
    DenseOp p = DenseOp::Identity(big, big);
    for (int i = 0; i < k; ++i) p = p * x;
    return p.topLeftCorner(dim, dim);
}

// =============================================================================
// States
// =============================================================================

/// Density matrix with its space descriptor.
struct DensityState {
    SpaceDescriptor space;
    DenseOp rho;

    int dim() const { return static_cast<int>(rho.rows()); }
    double trace() const { return rho.trace().real(); }
    double purity() const { return (rho.cwiseProduct(rho.transpose())).sum().real(); }

    double hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<DenseOp> es(rho, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    double max_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<DenseOp> es(rho, Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    }

    /// Checks trace, Hermiticity and (optionally) positivity invariants.
    void validate(bool check_positivity = false) const {
        if (rho.rows() != space.total() || rho.cols() != space.total())
            throw ParameterError("density matrix dimension does not match its space");
        if (std::abs(trace() - 1.0) > 1e-9) throw ParameterError("density matrix trace differs from 1");
        if (hermiticity_error() > 1e-10) throw ParameterError("density matrix is not Hermitian");
        if (check_positivity && min_eigenvalue() < -1e-8)
            throw ParameterError("density matrix has a negative eigenvalue");
    }
};

/// Truncated thermal state p_n ∝ (n̄/(n̄+1))^n, renormalised.
inline DensityState thermal_state(int dim, double n_bar, const std::string& label = "m") {
    if (dim < 2) throw ParameterError("thermal_state: dimension must be at least 2");
    if (!(n_bar >= 0.0)) throw ParameterError("thermal_state: mean occupation must be non-negative");
    DensityState s{single_mode_space(dim, label), DenseOp::Zero(dim, dim)};
    if (n_bar == 0.0) {
        s.rho(0, 0) = 1.0;
        return s;
    }
    const double r = n_bar / (n_bar + 1.0);
    std::vector<double> p(static_cast<std::size_t>(dim));
    double norm = 0.0;
    double w = 1.0;
    for (int n = 0; n < dim; ++n) {
        p[static_cast<std::size_t>(n)] = w;
        norm += w;
        w *= r;
    }
    for (int n = 0; n < dim; ++n) s.rho(n, n) = p[static_cast<std::size_t>(n)] / norm;
    return s;
}

/// Basis state of a single mode.
inline DensityState fock_state(int dim, int n, const std::string& label = "m") {
    if (n < 0 || n >= dim) throw ParameterError("fock_state: level out of range");
    DensityState s{single_mode_space(dim, label), DenseOp::Zero(dim, dim)};
    s.rho(n, n) = 1.0;
    return s;
}

/// One term of a pure-state expansion: levels by label and amplitude.
struct BasisAmplitude {
    std::map<std::string, int> levels;
    cplx amplitude;
};

/// Normalised ket from labelled amplitudes.
inline StateVector ket(const SpaceDescriptor& space, const std::vector<BasisAmplitude>& amps) {
    StateVector v = StateVector::Zero(space.total());
    for (const auto& a : amps) v(basis_index(space, a.levels)) += a.amplitude;
    const double n = v.norm();
    if (!(n > 0.0)) throw ParameterError("pure_state: zero vector");
    return v / n;
}

inline DensityState projector_state(const SpaceDescriptor& space, const StateVector& psi) {
    const double n = psi.norm();
    if (!(n > 0.0)) throw ParameterError("pure_state: zero vector");
    const StateVector u = psi / n;
    return {space, u * u.adjoint()};
}

inline DensityState pure_state(const SpaceDescriptor& space, const std::vector<BasisAmplitude>& amps) {
    return projector_state(space, ket(space, amps));
}

/// Ket of a single mode from amplitudes c_0..c_{k}, zero-padded to dim.
inline StateVector mode_ket(int dim, const std::vector<cplx>& amps) {
    if (static_cast<int>(amps.size()) > dim) throw ParameterError("mode_ket: more amplitudes than levels");
    StateVector v = StateVector::Zero(dim);
    for (std::size_t n = 0; n < amps.size(); ++n) v(static_cast<Eigen::Index>(n)) = amps[n];
    const double nrm = v.norm();
    if (!(nrm > 0.0)) throw ParameterError("mode_ket: zero vector");
    return v / nrm;
}

/// Tensor product of states; the result's labels are concatenated.
inline DensityState tensor(const DensityState& a, const DensityState& b) {
    SpaceDescriptor s = a.space;
    s.dims.insert(s.dims.end(), b.space.dims.begin(), b.space.dims.end());
    s.labels.insert(s.labels.end(), b.space.labels.begin(), b.space.labels.end());
    DenseOp r(a.dim() * b.dim(), a.dim() * b.dim());
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j)
            r.block(i * b.dim(), j * b.dim(), b.dim(), b.dim()) = a.rho(i, j) * b.rho;
    return {s, r};
}

/// Tr(ρ·op).
inline cplx expectation(const DensityState& state, const OperatorMatrix& op) {
    if (state.space != op.space) throw ParameterError("expectation: state and operator live on different spaces");
    cplx acc = 0.0;
    for (int k = 0; k < op.sparse.outerSize(); ++k)
        for (SparseOp::InnerIterator it(op.sparse, k); it; ++it) acc += it.value() * state.rho(it.col(), it.row());
    return acc;
}

} // namespace squidmech
