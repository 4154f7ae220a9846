// Acceptance suite: end-to-end checks with pinned tolerances, one pass/fail
// line per criterion. Exits nonzero if any gating criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sigcut/sigcut.hpp"

namespace fs = std::filesystem;
using namespace sigcut;

namespace {

int g_failures = 0;

class Criterion {
 public:
  Criterion(int number, std::string description)
      : number_(number), description_(std::move(description)),
        start_(std::chrono::steady_clock::now()) {}

  void check(bool ok, const std::string& detail) {
    if (!ok && first_failure_.empty()) first_failure_ = detail;
    ok_ = ok_ && ok;
  }

  void finish(double runtime_limit_seconds = 0.0) {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    if (runtime_limit_seconds > 0.0 && elapsed > runtime_limit_seconds) {
      ok_ = false;
      if (first_failure_.empty()) {
        first_failure_ = "runtime " + std::to_string(elapsed) + "s exceeds limit";
      }
    }
    std::printf("[%s] criterion %d: %s (%.2fs)%s%s\n", ok_ ? "PASS" : "FAIL", number_,
                description_.c_str(), elapsed, first_failure_.empty() ? "" : " -- ",
                first_failure_.c_str());
    std::fflush(stdout);
    if (!ok_) ++g_failures;
  }

 private:
  int number_;
  std::string description_;
  bool ok_ = true;
  std::string first_failure_;
  std::chrono::steady_clock::time_point start_;
};

DenseTensor randn(std::uint64_t seed, std::vector<std::size_t> shape) {
  Xoshiro256pp rng(seed);
  const std::size_t n = DenseTensor::checked_numel(shape);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.next_normal();
  return DenseTensor::from_raw(std::move(shape), std::move(v));
}

double reconstruction_error(const DenseTensor& a, const CutDecomposition& d) {
  const DenseTensor e = expand(d);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double diff = a.data()[i] - e.data()[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

// 1. Pythagoras identity on residuals recomputed from scratch.
void criterion_pythagoras() {
  Criterion c(1, "greedy Pythagoras identity at 1e-9 relative");
  const std::size_t sizes[] = {8, 16, 32, 64, 128};
  int matrix_index = 0;
  for (int rep = 0; rep < 4; ++rep) {
    for (const std::size_t n : sizes) {
      const DenseTensor a = randn(100 + matrix_index, {n, n});
      DecomposeConfig cfg;
      cfg.width = 24;
      cfg.record_curve = true;
      cfg.search.seed = static_cast<std::uint64_t>(matrix_index);
      auto [d, report] = greedy_decompose(a, cfg);
      double prev_sq = a.squared_norm();
      for (std::size_t k = 1; k <= d.width(); ++k) {
        const double cut = report.steps[k - 1].cut_value;
        const double fresh = reconstruction_error(a, truncated(d, k));
        const double expected = prev_sq - cut * cut / static_cast<double>(a.numel());
        const bool ok = std::abs(fresh * fresh - expected) <=
                        1e-9 * std::max({std::abs(expected), fresh * fresh, 1e-6});
        c.check(ok, "size " + std::to_string(n) + " step " + std::to_string(k));
        prev_sq = fresh * fresh;
      }
      ++matrix_index;
    }
  }
  c.finish(10.0);
}

// 2. Greedy is a sound lower bound and, with restarts, almost always optimal.
void criterion_oracle() {
  Criterion c(2, "greedy soundness and >=95/100 optimality vs brute force");
  int optimal_matrix = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Xoshiro256pp rng(7000 + trial);
    std::vector<double> v(16);
    for (auto& x : v) x = 2.0 * rng.next_f64() - 1.0;
    const DenseTensor a({4, 4}, v);
    const double exact = brute_force_cut(a).value;
    const CutResult res =
        greedy_signed_cut(a, {.seed = static_cast<std::uint64_t>(trial), .restarts = 32});
    c.check(res.value <= exact + 1e-9, "matrix trial " + std::to_string(trial) + " exceeds oracle");
    if (res.value >= exact - 1e-9) ++optimal_matrix;
  }
  c.check(optimal_matrix >= 95,
          "matrix optimum found only " + std::to_string(optimal_matrix) + "/100");

  int optimal_tensor = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Xoshiro256pp rng(7500 + trial);
    std::vector<double> v(8);
    for (auto& x : v) x = 2.0 * rng.next_f64() - 1.0;
    const DenseTensor a({2, 2, 2}, v);
    const double exact = brute_force_cut(a).value;
    const CutResult res =
        axial_greedy_cut(a, {.seed = static_cast<std::uint64_t>(trial), .restarts = 32});
    c.check(res.value <= exact + 1e-9, "tensor trial " + std::to_string(trial) + " exceeds oracle");
    if (res.value >= exact - 1e-9) ++optimal_tensor;
  }
  c.check(optimal_tensor >= 95,
          "tensor optimum found only " + std::to_string(optimal_tensor) + "/100");
  c.finish(30.0);
}

// 3. Exponential decay of the residual on a 256x256 standard normal matrix.
void criterion_decay() {
  Criterion c(3, "256x256 width-600 decay: r_k decreasing, log-linear fit R^2 >= 0.99");
  const DenseTensor a = randn(42, {256, 256});
  DecomposeConfig cfg;
  cfg.width = 600;
  cfg.record_curve = true;
  auto [d, report] = greedy_decompose(a, cfg);
  bool decreasing = true;
  for (std::size_t k = 1; k < report.steps.size(); ++k) {
    decreasing = decreasing &&
                 report.steps[k].residual_norm < report.steps[k - 1].residual_norm;
  }
  c.check(decreasing, "residual norms are not strictly decreasing");

  // least-squares fit of log r_k against k on [50, 600]
  std::vector<double> xs, ys;
  for (const CutStep& s : report.steps) {
    if (s.k >= 50) {
      xs.push_back(static_cast<double>(s.k));
      ys.push_back(std::log(s.residual_norm / report.input_norm));
    }
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fit = slope * xs[i] + intercept;
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  char buf[64];
  std::snprintf(buf, sizeof buf, "R^2 = %.5f, slope = %.3e", r2, slope);
  c.check(r2 >= 0.99, buf);
  c.check(slope < 0.0, "fit slope is not negative");
  c.finish(120.0);
}

// 4. Half-precision baselines on a 1024x1024 standard normal matrix.
void criterion_half_baselines() {
  Criterion c(4, "bf16 error in [1.4e-3, 1.9e-3], f16 in [1.75e-4, 2.4e-4] on 1024^2 N(0,1)");
  const DenseTensor a = randn(4242, {1024, 1024});
  const double bf16_err = relative_error(a, quantize_half(a, HalfFormat::kBf16));
  const double f16_err = relative_error(a, quantize_half(a, HalfFormat::kF16));
  char buf[96];
  std::snprintf(buf, sizeof buf, "bf16 = %.4e, f16 = %.4e", bf16_err, f16_err);
  c.check(bf16_err >= 1.4e-3 && bf16_err <= 1.9e-3, buf);
  c.check(f16_err >= 1.75e-4 && f16_err <= 2.4e-4, buf);
  c.finish(10.0);
}

// 5. Width table: 25 exact integer equalities.
void criterion_width_table() {
  Criterion c(5, "width_for_compression reproduces all 25 tabulated entries");
  struct Row {
    std::size_t m, n;
    std::size_t widths[5];
  };
  const Row rows[] = {
      {1024, 4096, {6512, 5698, 4884, 4070, 3256}},
      {4096, 4096, {16320, 14280, 12240, 10200, 8160}},
      {4096, 14336, {25442, 22261, 19081, 15901, 12721}},
      {14336, 4096, {25442, 22261, 19081, 15901, 12721}},
      {32000, 4096, {29023, 25395, 21767, 18139, 14511}},
  };
  const double rates[] = {0.5, 0.4375, 0.375, 0.3125, 0.25};
  for (const Row& row : rows) {
    const StorageModel model{32, 16, {row.m, row.n}, -1};
    for (int r = 0; r < 5; ++r) {
      const std::size_t got = width_for_compression(model, rates[r]);
      c.check(got == row.widths[r],
              std::to_string(row.m) + "x" + std::to_string(row.n) + " rate " +
                  std::to_string(rates[r]) + ": got " + std::to_string(got));
    }
  }
  c.finish();
}

// 6. Least-squares coefficient correction dominates greedy; residual
//    orthogonality of the normal-equation solution.
void criterion_least_squares() {
  Criterion c(6, "coefficient correction never hurts; lstsq residual orthogonality");
  for (int trial = 0; trial < 20; ++trial) {
    const DenseTensor a = randn(9100 + trial, {32, 32});
    DecomposeConfig cfg;
    cfg.width = 16;
    cfg.search.seed = static_cast<std::uint64_t>(trial);
    auto [d, report] = greedy_decompose(a, cfg);
    const double before = reconstruction_error(a, d);
    const double after = reconstruction_error(a, correct_coefficients(a, d));
    c.check(after <= before + 1e-9, "correction increased the error on trial " +
                                        std::to_string(trial));

    cfg.method = DecomposeConfig::Method::kLeastSquares;
    auto [dl, rl] = lstsq_decompose(a, cfg);
    DenseTensor residual = a;
    const DenseTensor e = expand(dl);
    for (std::size_t i = 0; i < residual.numel(); ++i) residual.data()[i] -= e.data()[i];
    const double bound = 1e-7 * a.frobenius_norm() * std::sqrt(static_cast<double>(a.numel()));
    for (std::size_t j = 0; j < dl.width(); ++j) {
      const std::vector<SignVector> signs{dl.factors[0].column(j), dl.factors[1].column(j)};
      c.check(std::abs(signed_contract(residual, signs)) <= bound,
              "orthogonality violated at term " + std::to_string(j));
    }
  }
  c.finish();
}

// 7. Scalar-channel image variant vs sign-channel variant at equal width.
void criterion_rgb() {
  Criterion c(7, "RGB-scalars median error <= RGB-signs at width 40 over 10 seeds");
  std::vector<double> scalars, signs;
  for (int seed = 0; seed < 10; ++seed) {
    const DenseTensor a = randn(9600 + seed, {32, 32, 3});
    DecomposeConfig cfg;
    cfg.width = 40;
    cfg.search.seed = static_cast<std::uint64_t>(seed);
    scalars.push_back(rgb_scalars_decompose(a, cfg).second.final_residual_norm);
    signs.push_back(greedy_decompose(a, cfg).second.final_residual_norm);
  }
  std::sort(scalars.begin(), scalars.end());
  std::sort(signs.begin(), signs.end());
  const double med_scalars = (scalars[4] + scalars[5]) / 2.0;
  const double med_signs = (signs[4] + signs[5]) / 2.0;
  char buf[96];
  std::snprintf(buf, sizeof buf, "medians: scalars %.5f vs signs %.5f", med_scalars, med_signs);
  c.check(med_scalars <= med_signs, buf);
  c.finish();
}

// 8. Bit-exact persistence.
void criterion_persistence() {
  Criterion c(8, "SCD/DTEN round trips bit-exact; prefix truncation; PPM byte-identical");
  const DenseTensor a = randn(11, {9, 7});
  DecomposeConfig cfg;
  cfg.width = 6;
  const CutDecomposition d = greedy_decompose(a, cfg).first;

  std::ostringstream scd(std::ios::binary);
  write_scd(scd, d, 64);
  std::istringstream scd_in(scd.str(), std::ios::binary);
  c.check(read_scd(scd_in) == d, "SCD round trip mismatch");
  c.check(scd.str().size() == scd_file_size(d, 64), "SCD size formula mismatch");

  // prefix truncation: header + first records with a patched width field
  const std::size_t header = 4 + 1 + 1 + 8 * 2 + 8 + 1;
  const std::size_t per_term = 8 + 2 + 1;  // f64 coeff + ceil(9/8) + ceil(7/8)
  std::string prefix = scd.str().substr(0, header + 4 * per_term);
  for (int i = 0; i < 8; ++i) {
    prefix[header - 9 + i] = static_cast<char>((std::uint64_t{4} >> (8 * i)) & 0xFF);
  }
  std::istringstream preread(prefix, std::ios::binary);
  c.check(read_scd(preread) == truncated(d, 4), "prefix truncation mismatch");

  std::ostringstream dten(std::ios::binary);
  write_raw(dten, a, RawDType::kF64);
  std::istringstream dten_in(dten.str(), std::ios::binary);
  c.check(read_raw(dten_in) == a, "DTEN round trip mismatch");

  Xoshiro256pp rng(12);
  std::ostringstream img(std::ios::binary);
  img << "P6\n16 8\n255\n";
  for (int i = 0; i < 8 * 16 * 3; ++i) img.put(static_cast<char>(rng.next_u64() & 0xFF));
  std::istringstream img_in(img.str(), std::ios::binary);
  const DenseTensor pix = read_ppm(img_in);
  std::ostringstream img_out(std::ios::binary);
  write_ppm(img_out, pix);
  c.check(img_out.str() == img.str(), "PPM bytes changed through read/write");
  c.finish();
}

// 9. CLI determinism under a fixed seed.
void criterion_cli_determinism(const std::string& cli) {
  Criterion c(9, "identical CLI invocations produce byte-identical SCD files");
  const fs::path dir = fs::temp_directory_path() /
                       ("sigcut_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const DenseTensor a = randn(900, {24, 24});
  const fs::path in = dir / "in.dten";
  {
    std::ofstream os(in, std::ios::binary);
    write_raw(os, a);
  }
  const fs::path out1 = dir / "out1.scd";
  const fs::path out2 = dir / "out2.scd";
  const std::string base = "'" + cli + "' decompose --width 12 --seed 5 '" + in.string() + "' '";
  const int code1 = std::system((base + out1.string() + "' > /dev/null").c_str());
  const int code2 = std::system((base + out2.string() + "' > /dev/null").c_str());
  c.check(WIFEXITED(code1) && WEXITSTATUS(code1) == 0, "first invocation failed");
  c.check(WIFEXITED(code2) && WEXITSTATUS(code2) == 0, "second invocation failed");
  const auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  const std::string b1 = slurp(out1);
  c.check(!b1.empty() && b1 == slurp(out2), "SCD bytes differ between runs");
  c.finish();
}

}  // namespace

int main() {
  criterion_pythagoras();
  criterion_oracle();
  criterion_decay();
  criterion_half_baselines();
  criterion_width_table();
  criterion_least_squares();
  criterion_rgb();
  criterion_persistence();
  criterion_cli_determinism(SIGCUT_CLI_PATH);
  std::printf(
      "[SKIP] criterion 10: stretch 4096^2 break-even reproduction (non-gating; needs a "
      "multi-hour full-scale run)\n");
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all gating criteria passed\n");
  return 0;
}
