#include "trialloc/kinship.hpp"

#include "trialloc/error.hpp"
#include "trialloc/linalg.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace trialloc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void check_sigma_r(double sigma2_alpha, double r) {
    if (!(sigma2_alpha > 0.0)) throw ValidationError("sigma2_alpha must be positive");
    if (!(r >= 0.0 && r < 1.0)) throw ValidationError("kinship correlation r must lie in [0, 1)");
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\"");
    return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& token, double& out) {
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

int KinshipSpec::K() const {
    return std::visit(overloaded{
                          [](const IdentityKinship& k) { return k.K; },
                          [](const CompoundSymmetryKinship& k) { return k.K; },
                          [](const BlockCompoundSymmetryKinship& k) { return k.K(); },
                          [](const DenseKinship& k) { return static_cast<int>(k.matrix.rows()); },
                      },
                      variant);
}

void KinshipSpec::validate() const {
    if (!(jitter >= 0.0)) throw ValidationError("jitter must be non-negative");
    std::visit(overloaded{
                   [](const IdentityKinship&) {},
                   [](const CompoundSymmetryKinship& k) { check_sigma_r(k.sigma2_alpha, k.r); },
                   [](const BlockCompoundSymmetryKinship& k) {
                       if (k.f < 1 || k.m < 1) throw ValidationError("block-CS kinship needs f >= 1 and m >= 1");
                       check_sigma_r(k.sigma2_alpha, k.r);
                   },
                   [](const DenseKinship& k) { (void)linalg::symmetrized(k.matrix, "kinship matrix"); },
               },
               variant);
    if (K() < 2) throw ValidationError("kinship needs at least two genotypes (K >= 2)");
}

Eigen::MatrixXd materialize(const KinshipSpec& spec) {
    spec.validate();
    const int K = spec.K();
    Eigen::MatrixXd N = std::visit(
        overloaded{
            [&](const IdentityKinship&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Identity(K, K); },
            [&](const CompoundSymmetryKinship& k) -> Eigen::MatrixXd {
                return k.a1() * Eigen::MatrixXd::Identity(K, K) + k.a() * Eigen::MatrixXd::Ones(K, K);
            },
            [&](const BlockCompoundSymmetryKinship& k) -> Eigen::MatrixXd {
                Eigen::MatrixXd block =
                    k.b1() * Eigen::MatrixXd::Identity(k.m, k.m) + k.b() * Eigen::MatrixXd::Ones(k.m, k.m);
                Eigen::MatrixXd out = Eigen::MatrixXd::Zero(K, K);
                for (int g = 0; g < k.f; ++g) out.block(g * k.m, g * k.m, k.m, k.m) = block;
                return out;
            },
            [&](const DenseKinship& k) -> Eigen::MatrixXd { return linalg::symmetrized(k.matrix, "kinship matrix"); },
        },
        spec.variant);
    N.diagonal().array() += spec.jitter;
    return N;
}

double asv(const Eigen::MatrixXd& N) {
    const auto K = N.rows();
    if (K < 2 || N.cols() != K) throw ValidationError("asv needs a square matrix with K >= 2");
    // tr[N T] = tr N - (1^T N 1) / K
    return (N.trace() - N.sum() / static_cast<double>(K)) / static_cast<double>(K - 1);
}

double sigma2_alpha_for_unit_asv(int K, int m, double r) {
    if (K < 2) throw ValidationError("K must be >= 2");
    if (m < 1 || m > K) throw ValidationError("m must lie in [1, K]");
    if (!(r >= 0.0 && r < 1.0)) throw ValidationError("r must lie in [0, 1)");
    const double denom = (K - 1) - (m - 1) * r;
    if (!(denom > 0.0)) throw ValidationError("K - 1 - (m - 1) r must be positive");
    return (K - 1) / denom;
}

PdDiagnostic validate_pd(const Eigen::MatrixXd& N) {
    const Eigen::MatrixXd sym = linalg::symmetrized(N, "kinship matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    PdDiagnostic d;
    d.min_eigenvalue = eig.eigenvalues().minCoeff();
    d.max_eigenvalue = eig.eigenvalues().maxCoeff();
    // Eigenvalues below this floor are indistinguishable from zero.
    const double floor = std::numeric_limits<double>::epsilon() * sym.rows() * std::abs(d.max_eigenvalue);
    d.positive_definite = d.min_eigenvalue > floor && Eigen::LLT<Eigen::MatrixXd>(sym).info() == Eigen::Success;
    d.condition_number = d.min_eigenvalue > 0.0 ? d.max_eigenvalue / d.min_eigenvalue
                                                : std::numeric_limits<double>::infinity();
    if (!d.positive_definite) {
        d.suggested_jitter = std::max(0.0, -d.min_eigenvalue) + std::max(default_jitter(sym), floor);
    }
    return d;
}

double default_jitter(const Eigen::MatrixXd& N) {
    const double mean_diag = N.diagonal().mean();
    return 1e-8 * (mean_diag > 0.0 ? mean_diag : 1.0);
}

Eigen::MatrixXd read_kinship_csv(const std::filesystem::path& path, std::vector<std::string>* ids) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open kinship file " + path.string());
    std::vector<std::vector<double>> rows;
    std::vector<std::string> header;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        std::vector<double> values(cells.size());
        bool numeric = true;
        for (std::size_t i = 0; i < cells.size() && numeric; ++i) numeric = parse_double(cells[i], values[i]);
        if (!numeric) {
            if (rows.empty() && header.empty()) {
                header = std::move(cells);
                continue;
            }
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": non-numeric entry");
        }
        rows.push_back(std::move(values));
    }
    const auto K = rows.size();
    if (K == 0) throw ValidationError(path.string() + ": no data rows");
    if (!header.empty() && header.size() != K) {
        throw ValidationError(path.string() + ": header has " + std::to_string(header.size()) +
                              " ids but there are " + std::to_string(K) + " rows");
    }
    Eigen::MatrixXd N(K, K);
    for (std::size_t i = 0; i < K; ++i) {
        if (rows[i].size() != K) {
            throw ValidationError(path.string() + ": matrix is not square (row " + std::to_string(i + 1) +
                                  " has " + std::to_string(rows[i].size()) + " entries, expected " +
                                  std::to_string(K) + ")");
        }
        for (std::size_t j = 0; j < K; ++j) N(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    if (ids) *ids = std::move(header);
    return N;
}

}  // namespace trialloc
