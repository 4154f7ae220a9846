// Command-line front end: decompose, reconstruct, curve, width, quantize,
// oracle. Stdout carries machine-parseable key=value lines; diagnostics go
// to stderr. Exit codes: 0 success, 2 I/O or format error, 3 invalid
// configuration.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sigcut/sigcut.hpp"

namespace {

// Fixed default seed; reproducibility outranks convenience, so nothing is
// ever seeded from the clock.
constexpr std::uint64_t kDefaultSeed = 0x5CD15EED;

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw sigcut::io_error("cannot open input file: " + path);
  return is;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw sigcut::io_error("cannot open output file: " + path);
  return os;
}

bool has_extension(const std::string& path, const char* ext) {
  return std::filesystem::path(path).extension() == ext;
}

/// Loads a DTEN or PPM tensor (sniffed from the magic bytes) and reports the
/// storage width of the source values.
sigcut::DenseTensor read_tensor_file(const std::string& path, int& source_bits) {
  std::ifstream is = open_input(path);
  char head[4] = {};
  is.read(head, 4);
  if (!is || is.gcount() != 4) throw sigcut::io_error("input too short: " + path);
  is.seekg(0);
  if (std::string_view(head, 4) == "DTEN") {
    return sigcut::read_raw(is, &source_bits);
  }
  if (head[0] == 'P' && head[1] == '6') {
    source_bits = 8;
    return sigcut::read_ppm(is);
  }
  throw sigcut::io_error("unrecognized input format (expected DTEN or P6 PPM): " + path);
}

sigcut::RawDType parse_dtype(const std::string& name) {
  if (name == "f64") return sigcut::RawDType::kF64;
  if (name == "f32") return sigcut::RawDType::kF32;
  if (name == "u8") return sigcut::RawDType::kU8;
  throw std::invalid_argument("unknown dtype: " + name);
}

void write_tensor_file(const std::string& path, const sigcut::DenseTensor& t,
                       const std::string& dtype) {
  std::ofstream os = open_output(path);
  if (has_extension(path, ".ppm")) {
    sigcut::write_ppm(os, t);
  } else {
    sigcut::write_raw(os, t, parse_dtype(dtype));
  }
}

struct DecomposeOptions {
  std::string input;
  std::string output;       // SCD path ("" for curve-only runs)
  std::string curve_path;   // CSV path ("" to skip)
  std::optional<std::size_t> width;
  std::optional<double> rate;
  std::string method = "greedy";
  std::uint64_t seed = kDefaultSeed;
  std::size_t restarts = 1;
  std::size_t max_sweeps = 100;
  std::size_t flush_width = 32;
  int coeff_bits = 64;
  std::optional<int> source_bits;  // default: dtype of the input file
  std::string channel_mode = "signs";
  std::optional<std::size_t> channel_axis;
};

void add_decompose_options(CLI::App* cmd, DecomposeOptions& opt, bool scd_required) {
  cmd->add_option("input", opt.input, "input tensor (DTEN or binary PPM)")->required();
  if (scd_required) {
    cmd->add_option("output", opt.output, "output decomposition (SCD)")->required();
  } else {
    cmd->add_option("--scd", opt.output, "also write the decomposition (SCD)");
  }
  auto* width = cmd->add_option("--width", opt.width, "number of sign terms");
  auto* rate = cmd->add_option("--rate", opt.rate,
                               "target compression rate in (0,1]; resolves the width");
  width->excludes(rate);
  rate->excludes(width);
  cmd->add_option("--method", opt.method, "greedy | lstsq")
      ->check(CLI::IsMember({"greedy", "lstsq"}));
  cmd->add_option("--seed", opt.seed, "RNG seed (default fixed, never time-based)");
  cmd->add_option("--restarts", opt.restarts, "search restarts per term")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-sweeps", opt.max_sweeps, "alternation sweep cap per search")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--flush-width", opt.flush_width, "buffered terms per residual flush")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--coeff-bits", opt.coeff_bits, "stored coefficient precision (32 or 64)")
      ->check(CLI::IsMember({32, 64}));
  cmd->add_option("--source-bits", opt.source_bits,
                  "bits per source entry for rate accounting (default: input dtype)");
  cmd->add_option("--channel-mode", opt.channel_mode,
                  "signs: sign vectors on every axis; scalars: per-channel coefficients")
      ->check(CLI::IsMember({"signs", "scalars"}));
  cmd->add_option("--channel-axis", opt.channel_axis,
                  "channel axis for --channel-mode scalars (default: last axis)");
}

int run_decompose(const DecomposeOptions& opt, bool curve_required) {
  int input_bits = 64;
  const sigcut::DenseTensor a = read_tensor_file(opt.input, input_bits);

  const bool scalars = opt.channel_mode == "scalars";
  int channel_axis = -1;
  if (scalars) {
    channel_axis = static_cast<int>(opt.channel_axis.value_or(a.order() - 1));
    if (channel_axis < 0 || static_cast<std::size_t>(channel_axis) >= a.order()) {
      throw std::invalid_argument("--channel-axis out of range");
    }
  } else if (opt.channel_axis) {
    throw std::invalid_argument("--channel-axis requires --channel-mode scalars");
  }

  sigcut::StorageModel model{opt.coeff_bits, opt.source_bits.value_or(input_bits), a.shape(),
                             channel_axis};

  sigcut::DecomposeConfig cfg;
  if (opt.rate) {
    cfg.width = sigcut::width_for_compression(model, *opt.rate);
  } else if (opt.width) {
    cfg.width = *opt.width;
  } else {
    throw std::invalid_argument("exactly one of --width / --rate is required");
  }
  cfg.method = opt.method == "lstsq" ? sigcut::DecomposeConfig::Method::kLeastSquares
                                     : sigcut::DecomposeConfig::Method::kGreedy;
  cfg.search.seed = opt.seed;
  cfg.search.restarts = opt.restarts;
  cfg.search.max_sweeps = opt.max_sweeps;
  cfg.flush_width = opt.flush_width;
  cfg.record_curve = !opt.curve_path.empty() || curve_required;

  auto [d, report] = scalars ? sigcut::rgb_scalars_decompose(
                                   a, cfg, static_cast<std::size_t>(channel_axis))
                             : sigcut::decompose(a, cfg);

  if (!opt.output.empty()) {
    std::ofstream os = open_output(opt.output);
    sigcut::write_scd(os, d, opt.coeff_bits);
  }
  if (!opt.curve_path.empty()) {
    std::ofstream os = open_output(opt.curve_path);
    sigcut::write_curve_csv(os, sigcut::emit_curve(report, model));
  }
  const double rel_err =
      report.input_norm == 0.0 ? 0.0 : report.final_residual_norm / report.input_norm;
  std::cout << "width=" << report.width
            << " rate=" << fmt_g(sigcut::compression_rate(report.width, model))
            << " rel_err=" << fmt_g(rel_err) << "\n";
  return 0;
}

struct ReconstructOptions {
  std::string input;
  std::string output;
  std::optional<std::size_t> truncate;
  std::string dtype = "f64";
};

int run_reconstruct(const ReconstructOptions& opt) {
  std::ifstream is = open_input(opt.input);
  sigcut::CutDecomposition d = sigcut::read_scd(is);
  if (opt.truncate) {
    if (*opt.truncate > d.width()) {
      throw std::invalid_argument("--truncate exceeds the stored width");
    }
    d = sigcut::truncated(d, *opt.truncate);
  }
  write_tensor_file(opt.output, sigcut::expand(d), opt.dtype);
  std::cout << "width=" << d.width() << "\n";
  return 0;
}

struct WidthOptions {
  std::vector<std::size_t> shape;
  double rate = 0.0;
  int coeff_bits = 0;
  int source_bits = 0;
  std::optional<std::size_t> channel_axis;
};

int run_width(const WidthOptions& opt) {
  const int channel_axis = opt.channel_axis ? static_cast<int>(*opt.channel_axis) : -1;
  if (channel_axis >= 0 && static_cast<std::size_t>(channel_axis) >= opt.shape.size()) {
    throw std::invalid_argument("--channel-axis out of range");
  }
  sigcut::StorageModel model{opt.coeff_bits, opt.source_bits, opt.shape, channel_axis};
  std::cout << "width=" << sigcut::width_for_compression(model, opt.rate) << "\n";
  return 0;
}

struct QuantizeOptions {
  std::string input;
  std::string output;
  std::string format;
  std::string dtype = "f32";  // both 16-bit formats embed exactly in f32
};

int run_quantize(const QuantizeOptions& opt) {
  int input_bits = 64;
  const sigcut::DenseTensor a = read_tensor_file(opt.input, input_bits);
  sigcut::QuantizeStats stats;
  const sigcut::DenseTensor q = sigcut::quantize_half(
      a, opt.format == "bf16" ? sigcut::HalfFormat::kBf16 : sigcut::HalfFormat::kF16, &stats);
  write_tensor_file(opt.output, q, opt.dtype);
  const double rel_err = a.frobenius_norm() == 0.0 ? 0.0 : sigcut::relative_error(a, q);
  std::cout << "rel_err=" << fmt_g(rel_err) << " saturated=" << stats.saturated << "\n";
  return 0;
}

int run_oracle(const std::string& input) {
  int input_bits = 64;
  const sigcut::DenseTensor a = read_tensor_file(input, input_bits);
  const sigcut::CutResult res = sigcut::brute_force_cut(a);
  std::cout << "value=" << fmt_g(res.value) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"signed cut decompositions of matrices and tensors"};
  app.require_subcommand(1);

  DecomposeOptions dec;
  CLI::App* cmd_decompose = app.add_subcommand("decompose", "decompose a tensor into sign terms");
  add_decompose_options(cmd_decompose, dec, /*scd_required=*/true);
  cmd_decompose->add_option("--curve", dec.curve_path, "write the per-width error curve (CSV)");

  DecomposeOptions cur;
  CLI::App* cmd_curve =
      app.add_subcommand("curve", "decompose and write the error-vs-compression curve");
  add_decompose_options(cmd_curve, cur, /*scd_required=*/false);
  cmd_curve->add_option("output", cur.curve_path, "output curve (CSV)")->required();

  ReconstructOptions rec;
  CLI::App* cmd_reconstruct =
      app.add_subcommand("reconstruct", "expand a decomposition back to a tensor");
  cmd_reconstruct->add_option("input", rec.input, "input decomposition (SCD)")->required();
  cmd_reconstruct->add_option("output", rec.output, "output tensor (DTEN, or PPM by extension)")
      ->required();
  cmd_reconstruct->add_option("--truncate", rec.truncate, "expand only the first w terms");
  cmd_reconstruct->add_option("--dtype", rec.dtype, "DTEN output dtype (f64 | f32 | u8)")
      ->check(CLI::IsMember({"f64", "f32", "u8"}));

  WidthOptions wid;
  CLI::App* cmd_width = app.add_subcommand("width", "width matching a target compression rate");
  cmd_width->add_option("--shape", wid.shape, "tensor shape, e.g. --shape 1024,4096")
      ->required()
      ->delimiter(',');
  cmd_width->add_option("--rate", wid.rate, "target compression rate in (0,1]")->required();
  cmd_width->add_option("--coeff-bits", wid.coeff_bits, "bits per stored coefficient")->required();
  cmd_width->add_option("--source-bits", wid.source_bits, "bits per source entry")->required();
  cmd_width->add_option("--channel-axis", wid.channel_axis,
                        "account for per-channel coefficients on this axis");

  QuantizeOptions qnt;
  CLI::App* cmd_quantize =
      app.add_subcommand("quantize", "round to a 16-bit float grid (baseline curves)");
  cmd_quantize->add_option("input", qnt.input, "input tensor (DTEN or PPM)")->required();
  cmd_quantize->add_option("output", qnt.output, "output tensor (DTEN, or PPM by extension)")
      ->required();
  cmd_quantize->add_option("--format", qnt.format, "bf16 | f16")
      ->required()
      ->check(CLI::IsMember({"bf16", "f16"}));
  cmd_quantize->add_option("--dtype", qnt.dtype, "DTEN output dtype (f64 | f32)")
      ->check(CLI::IsMember({"f64", "f32"}));

  std::string oracle_input;
  CLI::App* cmd_oracle =
      app.add_subcommand("oracle", "exact signed cut norm of a small tensor (exhaustive)");
  cmd_oracle->add_option("input", oracle_input, "input tensor (DTEN or PPM)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    if (cmd_decompose->parsed()) return run_decompose(dec, false);
    if (cmd_curve->parsed()) return run_decompose(cur, true);
    if (cmd_reconstruct->parsed()) return run_reconstruct(rec);
    if (cmd_width->parsed()) return run_width(wid);
    if (cmd_quantize->parsed()) return run_quantize(qnt);
    if (cmd_oracle->parsed()) return run_oracle(oracle_input);
  } catch (const sigcut::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
