#pragma once

#include "squidmech/analysis.hpp"
#include "squidmech/circuit.hpp"
#include "squidmech/error.hpp"
#include "squidmech/lindblad.hpp"
#include "squidmech/protocols.hpp"

#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <string>
#include <vector>

namespace squidmech {

// =============================================================================
// CSV emission
// =============================================================================

/// Fixed 17-significant-digit formatting so identical runs give identical bytes.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) {
        for (std::size_t k = 0; k < header.size(); ++k) text_ += (k ? "," : "") + header[k];
        text_ += '\n';
        columns_ = header.size();
    }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_) throw Error(ErrorKind::io, "CSV row has the wrong number of columns");
        for (std::size_t k = 0; k < values.size(); ++k) text_ += (k ? "," : "") + fmt17(values[k]);
        text_ += '\n';
    }

    /// Row whose leading cells are text.
    void row(const std::vector<std::string>& labels, const std::vector<double>& values) {
        if (labels.size() + values.size() != columns_) throw Error(ErrorKind::io, "CSV row has the wrong number of columns");
        std::size_t k = 0;
        for (const auto& l : labels) text_ += (k++ ? "," : "") + l;
        for (double v : values) text_ += (k++ ? "," : "") + fmt17(v);
        text_ += '\n';
    }

    const std::string& str() const { return text_; }

    void save(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
        f << text_;
        if (!f) throw Error(ErrorKind::io, "write failed for '" + path.string() + "'");
    }

private:
    std::string text_;
    std::size_t columns_ = 0;
};

inline double to_hz(double omega) { return omega / constants::two_pi; }

inline CsvWriter coupling_sweep_csv(const std::vector<CouplingSweepRow>& rows) {
    CsvWriter w({"phi_b", "g_Hz", "g1_Hz", "g2_Hz", "JL_Hz", "JC_Hz", "Jeff_Hz", "V_Hz"});
    for (const auto& r : rows)
        w.row({r.phi_b, to_hz(r.c.g), to_hz(r.c.g1), to_hz(r.c.g2), to_hz(r.c.JL), to_hz(r.c.JC), to_hz(r.c.J_eff),
               to_hz(r.c.V)});
    return w;
}

inline CsvWriter trajectory_csv(const Trajectory& tr) {
    CsvWriter w({"t_ns", "n_m", "n_q1", "n_q2", "purity"});
    for (std::size_t k = 0; k < tr.t.size(); ++k) w.row({tr.t[k] * 1e9, tr.n_m[k], tr.n_q1[k], tr.n_q2[k], tr.purity[k]});
    return w;
}

inline CsvWriter wigner_csv(const WignerGrid& g) {
    CsvWriter w({"x", "p", "W"});
    for (std::size_t i = 0; i < g.x.size(); ++i)
        for (std::size_t j = 0; j < g.p.size(); ++j)
            w.row({g.x[i], g.p[j], g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
    return w;
}

inline CsvWriter density_csv(const std::vector<DensityEntry>& entries) {
    CsvWriter w({"bra", "ket", "re", "im", "abs"});
    for (const auto& e : entries) w.row({e.bra, e.ket}, {e.re, e.im, e.abs});
    return w;
}

inline CsvWriter cycle_csv(const std::vector<double>& n_m) {
    CsvWriter w({"cycle", "n_m"});
    for (std::size_t k = 0; k < n_m.size(); ++k) w.row({static_cast<double>(k + 1), n_m[k]});
    return w;
}

inline CsvWriter sweep_csv(const std::vector<SweepRow>& rows) {
    CsvWriter w({"value", "fidelity_prep", "root_fidelity_prep", "min_fidelity", "peak_phonon_one", "cooling_n_m",
                 "cooling_vacuum"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : rows)
        w.row({r.value, r.fidelity_prep, r.root_fidelity_prep, r.min_fidelity, r.peak_phonon_one,
               r.cooling_n_m.value_or(nan), r.cooling_vacuum.value_or(nan)});
    return w;
}

} // namespace squidmech
