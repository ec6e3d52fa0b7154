#include "sfi/filter_design.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "sfi/errors.hpp"

namespace sfi {

bool is_valid(const MgfParams& p) {
  return std::isfinite(p.mu) && std::isfinite(p.sigma) && std::isfinite(p.phi) && p.sigma > 0.0 &&
         p.mu >= 0.0;
}

bool AnalogFilterBank::valid() const {
  for (const auto& p : params) {
    if (!is_valid(p)) return false;
  }
  return true;
}

Complex eval_mgf(const MgfParams& p, double omega) {
  const double two_var = 2.0 * p.sigma * p.sigma;
  const double lo = std::exp(-(omega - p.mu) * (omega - p.mu) / two_var);
  const double hi = std::exp(-(omega + p.mu) * (omega + p.mu) / two_var);
  return lo * std::polar(1.0, p.phi) + hi * std::polar(1.0, -p.phi);
}

MgfGradient eval_mgf_gradient(const MgfParams& p, double omega) {
  const double s2 = p.sigma * p.sigma;
  const double s3 = s2 * p.sigma;
  const double dm = omega - p.mu;
  const double dp = omega + p.mu;
  const double lo = std::exp(-dm * dm / (2.0 * s2));
  const double hi = std::exp(-dp * dp / (2.0 * s2));
  const double c = std::cos(p.phi);
  const double s = std::sin(p.phi);

  const double dlo_dmu = lo * dm / s2;
  const double dhi_dmu = -hi * dp / s2;
  const double dlo_dsigma = lo * dm * dm / s3;
  const double dhi_dsigma = hi * dp * dp / s3;

  // Re G = (lo + hi) cos(phi), Im G = (lo - hi) sin(phi)
  MgfGradient g{};
  g.re[0] = (dlo_dmu + dhi_dmu) * c;
  g.re[1] = (dlo_dsigma + dhi_dsigma) * c;
  g.re[2] = -(lo + hi) * s;
  g.im[0] = (dlo_dmu - dhi_dmu) * s;
  g.im[1] = (dlo_dsigma - dhi_dsigma) * s;
  g.im[2] = (lo - hi) * c;
  return g;
}

FrequencyGrid sample_frequency_grid(double fs, std::size_t count) {
  if (!(fs > 0.0)) throw std::invalid_argument("sample_frequency_grid: fs must be positive");
  if (count < 2) throw std::invalid_argument("sample_frequency_grid: count must be at least 2");
  FrequencyGrid grid;
  grid.fs = fs;
  grid.omegas.resize(count);
  const double top = std::numbers::pi * fs;
  for (std::size_t i = 0; i < count; ++i) {
    grid.omegas[i] = top * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  grid.omegas.back() = top;
  return grid;
}

DesignMatrix::DesignMatrix(double fs, std::size_t rows, std::size_t kernel_size, std::vector<Complex> entries)
    : fs_(fs), rows_(rows), kernel_size_(kernel_size), entries_(std::move(entries)) {
  if (entries_.size() != rows_ * kernel_size_) throw std::invalid_argument("DesignMatrix: entry count mismatch");
}

std::vector<double> DesignMatrix::stacked() const {
  std::vector<double> a(2 * rows_ * kernel_size_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t k = 0; k < kernel_size_; ++k) {
      const Complex& e = (*this)(i, k);
      a[i * kernel_size_ + k] = e.real();
      a[(rows_ + i) * kernel_size_ + k] = e.imag();
    }
  }
  return a;
}

namespace {

// Exponent offset (k - K/2) for the 1-based tap index k = store_index + 1.
double tap_offset(std::size_t store_index, std::size_t kernel_size) {
  return static_cast<double>(store_index + 1) - static_cast<double>(kernel_size) / 2.0;
}

}  // namespace

DesignMatrix build_design_matrix(const FrequencyGrid& grid, std::size_t kernel_size) {
  if (kernel_size < 1) throw std::invalid_argument("build_design_matrix: kernel size must be at least 1");
  const std::size_t rows = grid.count();
  std::vector<Complex> entries(rows * kernel_size);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < kernel_size; ++k) {
      entries[i * kernel_size + k] = std::polar(1.0, grid.omegas[i] * tap_offset(k, kernel_size) / grid.fs);
    }
  }
  return DesignMatrix(grid.fs, rows, kernel_size, std::move(entries));
}

Complex kernel_response(std::span<const double> b, double fs, double omega) {
  Complex acc{0.0, 0.0};
  for (std::size_t k = 0; k < b.size(); ++k) {
    acc += b[k] * std::polar(1.0, omega * tap_offset(k, b.size()) / fs);
  }
  return acc;
}

std::vector<double> stacked_pseudo_inverse(const DesignMatrix& d) {
  const auto rows = static_cast<Eigen::Index>(2 * d.rows());
  const auto cols = static_cast<Eigen::Index>(d.kernel_size());
  const std::vector<double> stacked = d.stacked();
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(
      stacked.data(), rows, cols);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? 1e-10 * sv(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }
  const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();

  std::vector<double> out(static_cast<std::size_t>(cols * rows));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.data(), cols, rows) = pinv;
  return out;
}

namespace {

std::vector<double> apply_pinv(std::span<const double> pinv, std::size_t kernel_size,
                               std::span<const Complex> target) {
  const std::size_t rows = target.size();
  std::vector<double> b(kernel_size, 0.0);
  for (std::size_t k = 0; k < kernel_size; ++k) {
    const double* row = pinv.data() + k * 2 * rows;
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += row[i] * target[i].real();
    for (std::size_t i = 0; i < rows; ++i) acc += row[rows + i] * target[i].imag();
    b[k] = acc;
  }
  return b;
}

void check_target(std::span<const Complex> target, std::size_t rows) {
  if (target.size() != rows) throw std::invalid_argument("solve_kernel: target length differs from grid size");
  for (const auto& g : target) {
    if (!std::isfinite(g.real()) || !std::isfinite(g.imag())) {
      throw std::invalid_argument("solve_kernel: target contains non-finite values");
    }
  }
}

}  // namespace

std::vector<double> solve_kernel(std::span<const Complex> target, const DesignMatrix& d) {
  check_target(target, d.rows());
  return apply_pinv(stacked_pseudo_inverse(d), d.kernel_size(), target);
}

KernelDesigner::KernelDesigner(double fs, std::size_t kernel_size, std::size_t grid_size)
    : grid_(sample_frequency_grid(fs, grid_size)), kernel_size_(kernel_size) {
  pinv_ = stacked_pseudo_inverse(build_design_matrix(grid_, kernel_size));
}

std::vector<double> KernelDesigner::solve(std::span<const Complex> target) const {
  check_target(target, grid_.count());
  return apply_pinv(pinv_, kernel_size_, target);
}

std::vector<double> KernelDesigner::design(const MgfParams& p) const {
  if (!is_valid(p)) throw std::invalid_argument("KernelDesigner::design: invalid MGF parameters");
  std::vector<Complex> target(grid_.count());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = eval_mgf(p, grid_.omegas[i]);
  std::vector<double> b = solve(target);
  std::reverse(b.begin(), b.end());
  return b;
}

KernelSet generate_filterbank_weights(const AnalogFilterBank& bank, double fs, std::size_t kernel_size,
                                      std::size_t grid_size) {
  if (!bank.valid()) throw std::invalid_argument("generate_filterbank_weights: invalid filter bank");
  const KernelDesigner designer(fs, kernel_size, grid_size);
  KernelSet set;
  set.fs = fs;
  set.kernel_size = kernel_size;
  set.grid_size = grid_size;
  set.kernels.reserve(bank.channel_pairs());
  for (const auto& p : bank.params) set.kernels.push_back(Kernel{designer.design(p)});
  return set;
}

void write_kernel_dump(const std::filesystem::path& stem, const KernelSet& set) {
  auto csv_path = stem;
  csv_path += ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
  csv << "channel,tap_index,value\n";
  for (std::size_t c = 0; c < set.kernels.size(); ++c) {
    const auto& taps = set.kernels[c].taps;
    for (std::size_t k = 0; k < taps.size(); ++k) csv << fmt::format("{},{},{:.9g}\n", c, k, taps[k]);
  }
  if (!csv) throw std::runtime_error("failed writing " + csv_path.string());

  nlohmann::json meta = {
      {"fs", set.fs},
      {"K", set.kernel_size},
      {"S", set.stride},
      {"I", set.grid_size},
      {"generated_at", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::now()))},
  };
  auto json_path = stem;
  json_path += ".json";
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot open " + json_path.string() + " for writing");
  js << meta.dump(2) << "\n";
}

KernelSet read_kernel_dump(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw FormatError("cannot open " + json_path.string());
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  KernelSet set;
  set.fs = meta.at("fs").get<double>();
  set.kernel_size = meta.at("K").get<std::size_t>();
  set.stride = meta.at("S").get<std::size_t>();
  set.grid_size = meta.at("I").get<std::size_t>();

  auto csv_path = stem;
  csv_path += ".csv";
  std::ifstream csv(csv_path);
  if (!csv) throw FormatError("cannot open " + csv_path.string());
  std::string line;
  std::getline(csv, line);
  if (line != "channel,tap_index,value") throw FormatError(csv_path.string() + ": unexpected header");
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t channel = 0;
    std::size_t tap = 0;
    double value = 0.0;
    char comma1 = 0;
    char comma2 = 0;
    if (!(row >> channel >> comma1 >> tap >> comma2 >> value) || comma1 != ',' || comma2 != ',') {
      throw FormatError(csv_path.string() + ": malformed row '" + line + "'");
    }
    if (channel >= set.kernels.size()) set.kernels.resize(channel + 1);
    auto& taps = set.kernels[channel].taps;
    if (tap != taps.size()) throw FormatError(csv_path.string() + ": tap_index out of order");
    taps.push_back(value);
  }
  for (const auto& k : set.kernels) {
    if (k.taps.size() != set.kernel_size) throw FormatError(csv_path.string() + ": tap count differs from K");
  }
  return set;
}

}  // namespace sfi
