#pragma once

// File formats: correspondence CSV, rig JSON, versioned model JSON,
// plus atomic writes and content hashing for run manifests.

#include <openssl/evp.h>

#include <Eigen/Dense>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "icalib/calibration.hpp"
#include "icalib/camera.hpp"
#include "icalib/correspondence.hpp"
#include "icalib/error.hpp"
#include "icalib/gp.hpp"
#include "icalib/mlp.hpp"
#include "icalib/rig.hpp"

namespace icalib::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kModelFormatVersion = 1;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw InvalidArgument("cannot format number");
  return {buf.data(), end};
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

/// Writes to `<path>.partial` then renames, so readers never see a half-written file.
inline void atomic_write(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  static constexpr char kDigits[] = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kDigits[md[i] >> 4]);
    hex.push_back(kDigits[md[i] & 0xF]);
  }
  return hex;
}

// ---- correspondence CSV ----

inline std::string correspondence_header(int cameras, bool with_board) {
  std::string h;
  for (int c = 1; c <= cameras; ++c) h += "u" + std::to_string(c) + ",v" + std::to_string(c) + ",";
  h += "x,y,z";
  if (with_board) h += ",board";
  return h;
}

inline std::string write_correspondence_csv(const CorrespondenceSet& data) {
  data.validate();
  const bool board = data.has_board_index();
  std::string out = correspondence_header(data.camera_count(), board) + "\n";
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < data.observations.cols(); ++c) out += format_double(data.observations(r, c)) + ",";
    out += format_double(data.points(r, 0)) + "," + format_double(data.points(r, 1)) + "," +
           format_double(data.points(r, 2));
    if (board) out += "," + std::to_string(data.board_index[static_cast<std::size_t>(r)]);
    out += "\n";
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view cell, std::size_t line, std::size_t column) {
  cell = trim(cell);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw DataFormatError(line, "column " + std::to_string(column) + ": '" + std::string(cell) + "' is not a finite number");
  }
  return v;
}

}  // namespace detail

/// Parses `u1,v1,...,ui,vi,x,y,z[,board]`. Errors carry 1-based line numbers.
inline CorrespondenceSet parse_correspondence_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    const std::size_t nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw DataFormatError(1, "missing header");

  auto header = detail::split_commas(lines[0]);
  for (auto& h : header) h = detail::trim(h);
  const bool board = !header.empty() && header.back() == "board";
  const std::size_t coord_cols = header.size() - (board ? 1 : 0);
  if (coord_cols < 5 || (coord_cols - 3) % 2 != 0) {
    throw DataFormatError(1, "header must be u1,v1,...,x,y,z with at least one camera");
  }
  const int cams = static_cast<int>((coord_cols - 3) / 2);
  const std::string expected_header = correspondence_header(cams, board);
  const auto expected = detail::split_commas(expected_header);
  for (std::size_t c = 0; c < expected.size(); ++c) {
    if (header[c] != expected[c]) {
      throw DataFormatError(1, "header column " + std::to_string(c + 1) + " is '" + std::string(header[c]) +
                                   "', expected '" + std::string(expected[c]) + "'");
    }
  }

  CorrespondenceSet out;
  const auto rows = static_cast<Eigen::Index>(lines.size() - 1);
  out.observations.resize(rows, 2 * cams);
  out.points.resize(rows, 3);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const std::size_t line_no = l + 1;
    const auto cells = detail::split_commas(lines[l]);
    if (cells.size() != header.size()) {
      throw DataFormatError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                         std::to_string(cells.size()));
    }
    const auto r = static_cast<Eigen::Index>(l - 1);
    for (int c = 0; c < 2 * cams; ++c) {
      out.observations(r, c) = detail::parse_number(cells[static_cast<std::size_t>(c)], line_no, static_cast<std::size_t>(c) + 1);
    }
    for (int k = 0; k < 3; ++k) {
      const std::size_t col = static_cast<std::size_t>(2 * cams + k);
      out.points(r, k) = detail::parse_number(cells[col], line_no, col + 1);
    }
    if (board) {
      const double b = detail::parse_number(cells.back(), line_no, cells.size());
      if (b < 0.0 || b != std::floor(b)) throw DataFormatError(line_no, "board index must be a non-negative integer");
      out.board_index.push_back(static_cast<int>(b));
    }
  }
  return out;
}

inline CorrespondenceSet load_correspondence_csv(const fs::path& path) { return parse_correspondence_csv(read_file(path)); }

// ---- rig JSON ----

inline json camera_to_json(const sim::CameraModel& cam) {
  json d;
  std::visit(
      [&](const auto& dist) {
        using T = std::decay_t<decltype(dist)>;
        if constexpr (std::is_same_v<T, sim::NoDistortion>) {
          d = {{"model", "none"}, {"coeffs", json::array()}};
        } else if constexpr (std::is_same_v<T, sim::BrownConrady>) {
          d = {{"model", "brown_conrady"}, {"coeffs", {dist.k1, dist.k2, dist.p1, dist.p2, dist.k3}}};
        } else {
          d = {{"model", "equidistant"}, {"coeffs", {dist.k1, dist.k2, dist.k3, dist.k4}}};
        }
      },
      cam.distortion);
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
  return {{"fx", cam.fx},         {"fy", cam.fy},   {"cx", cam.cx},      {"cy", cam.cy},
          {"width", cam.width},   {"height", cam.height}, {"distortion", d}, {"rotation", rot},
          {"translation", {cam.translation.x(), cam.translation.y(), cam.translation.z()}}};
}

inline json rig_to_json(const sim::RigConfig& rig) {
  json cams = json::array();
  for (const auto& c : rig.cameras) cams.push_back(camera_to_json(c));
  return {{"cameras", cams}, {"pixel_noise_std", rig.pixel_noise_std}, {"seed", rig.seed}};
}

namespace detail {

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

inline std::vector<double> require_numbers(const json& j, const char* key, std::size_t count, const std::string& where) {
  auto v = require<std::vector<double>>(j, key, where);
  if (count != 0 && v.size() != count) {
    throw ConfigError(where + ": field '" + key + "' needs " + std::to_string(count) + " numbers, got " +
                      std::to_string(v.size()));
  }
  return v;
}

}  // namespace detail

inline sim::CameraModel camera_from_json(const json& j, const std::string& where) {
  sim::CameraModel cam;
  cam.fx = detail::require<double>(j, "fx", where);
  cam.fy = detail::require<double>(j, "fy", where);
  cam.cx = detail::require<double>(j, "cx", where);
  cam.cy = detail::require<double>(j, "cy", where);
  cam.width = detail::require<int>(j, "width", where);
  cam.height = detail::require<int>(j, "height", where);
  if (j.contains("distortion")) {
    const json& d = j.at("distortion");
    const auto model = detail::require<std::string>(d, "model", where + ".distortion");
    const auto coeffs = d.contains("coeffs") ? detail::require<std::vector<double>>(d, "coeffs", where + ".distortion")
                                             : std::vector<double>{};
    auto need = [&](std::size_t n) {
      if (coeffs.size() != n) {
        throw ConfigError(where + ".distortion: model '" + model + "' needs " + std::to_string(n) + " coefficients");
      }
    };
    if (model == "none") {
      need(0);
      cam.distortion = sim::NoDistortion{};
    } else if (model == "brown_conrady") {
      need(5);
      cam.distortion = sim::BrownConrady{coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4]};
    } else if (model == "equidistant") {
      need(4);
      cam.distortion = sim::Equidistant{coeffs[0], coeffs[1], coeffs[2], coeffs[3]};
    } else {
      throw ConfigError(where + ".distortion: unknown model '" + model + "'");
    }
  }
  const auto rot = detail::require_numbers(j, "rotation", 9, where);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)];
  const auto t = detail::require_numbers(j, "translation", 3, where);
  cam.translation = {t[0], t[1], t[2]};
  try {
    cam.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return cam;
}

inline sim::RigConfig rig_from_json(const json& j) {
  sim::RigConfig rig;
  if (!j.is_object() || !j.contains("cameras") || !j.at("cameras").is_array()) {
    throw ConfigError("rig: 'cameras' must be an array");
  }
  for (std::size_t i = 0; i < j.at("cameras").size(); ++i) {
    rig.cameras.push_back(camera_from_json(j.at("cameras")[i], "rig.cameras[" + std::to_string(i) + "]"));
  }
  rig.pixel_noise_std = j.contains("pixel_noise_std") ? detail::require<double>(j, "pixel_noise_std", "rig") : 0.3;
  rig.seed = j.contains("seed") ? detail::require<std::uint64_t>(j, "seed", "rig") : 0;
  try {
    rig.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("rig: ") + e.what());
  }
  return rig;
}

inline json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

inline sim::RigConfig load_rig(const fs::path& path) { return rig_from_json(parse_json(read_file(path), path.string())); }

// ---- models ----

namespace detail {

inline json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::MatrixXd matrix_from(const json& j, Eigen::Index cols, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    std::vector<double> row;
    try {
      row = j[r].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError(where + ": row " + std::to_string(r) + " is not numeric");
    }
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError(where + ": row " + std::to_string(r) + " has the wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

inline Eigen::VectorXd vector_from(const json& j, const char* key, const std::string& where) {
  const auto v = require<std::vector<double>>(j, key, where);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json scaling_json(const ColumnScaling& s) { return {{"mean", vector_json(s.mean)}, {"scale", vector_json(s.scale)}}; }

inline ColumnScaling scaling_from(const json& j, const std::string& where) {
  return {vector_from(j, "mean", where), vector_from(j, "scale", where)};
}

inline void check_format(const json& j, const char* format) {
  if (require<std::string>(j, "format", "model") != format) throw ConfigError(std::string("model: expected format '") + format + "'");
  const int version = require<int>(j, "version", "model");
  if (version != kModelFormatVersion) throw ConfigError("model: unsupported version " + std::to_string(version));
}

}  // namespace detail

/// Hyperparameters, standardization and raw training data; Cholesky factors are rebuilt on load.
inline json calibration_to_json(const ImplicitCalibration& model) {
  json axes = json::array();
  for (int k = 0; k < 3; ++k) {
    const auto& g = model.axis(k);
    const auto& s = g.standardization();
    axes.push_back({{"hyperparameters",
                     {{"outputscale", g.hyper().outputscale},
                      {"lengthscales", detail::vector_json(g.hyper().lengthscales)},
                      {"noise_variance", g.hyper().noise_variance}}},
                    {"standardization",
                     {{"input_mean", detail::vector_json(s.inputs.mean)},
                      {"input_scale", detail::vector_json(s.inputs.scale)},
                      {"target_mean", s.target_mean},
                      {"target_scale", s.target_scale}}},
                    {"log_marginal_likelihood", g.log_marginal_likelihood()},
                    {"jitter_used", g.jitter_used()}});
  }
  const CorrespondenceSet train = model.training_data();
  return {{"format", "icalib-gp-calibration"},
          {"version", kModelFormatVersion},
          {"kernel", gp::to_string(model.gp_x().kernel().family)},
          {"camera_count", model.camera_count()},
          {"variance", "latent"},
          {"axes", axes},
          {"training", {{"observations", detail::matrix_rows(train.observations)}, {"points", detail::matrix_rows(train.points)}}}};
}

inline ImplicitCalibration calibration_from_json(const json& j) {
  detail::check_format(j, "icalib-gp-calibration");
  const auto kernel = detail::require<std::string>(j, "kernel", "model");
  gp::KernelFamily family;
  if (kernel == "se") {
    family = gp::KernelFamily::kSE;
  } else if (kernel == "se-ard") {
    family = gp::KernelFamily::kSEArd;
  } else {
    throw ConfigError("model: unknown kernel '" + kernel + "'");
  }
  const int cams = detail::require<int>(j, "camera_count", "model");
  if (cams < 1) throw ConfigError("model: camera_count must be positive");
  const gp::KernelSpec spec{family, 2 * cams};
  const json& tr = j.at("training");
  const Eigen::MatrixXd obs = detail::matrix_from(tr.at("observations"), 2 * cams, "model.training.observations");
  const Eigen::MatrixXd pts = detail::matrix_from(tr.at("points"), 3, "model.training.points");
  if (obs.rows() != pts.rows()) throw ConfigError("model: training observations and points differ in length");
  const json& axes = j.at("axes");
  if (!axes.is_array() || axes.size() != 3) throw ConfigError("model: 'axes' must hold three entries");

  std::array<std::optional<gp::FittedGP>, 3> fitted;
  for (int k = 0; k < 3; ++k) {
    const std::string where = "model.axes[" + std::to_string(k) + "]";
    const json& a = axes[static_cast<std::size_t>(k)];
    const json& h = a.at("hyperparameters");
    const json& s = a.at("standardization");
    gp::Hyperparameters hyper{detail::require<double>(h, "outputscale", where), detail::vector_from(h, "lengthscales", where),
                              detail::require<double>(h, "noise_variance", where)};
    gp::StandardizationParams scaling;
    scaling.inputs = {detail::vector_from(s, "input_mean", where), detail::vector_from(s, "input_scale", where)};
    scaling.target_mean = detail::require<double>(s, "target_mean", where);
    scaling.target_scale = detail::require<double>(s, "target_scale", where);
    try {
      fitted[static_cast<std::size_t>(k)] = gp::FittedGP::build({obs, pts.col(k)}, spec, hyper, scaling);
    } catch (const InvalidArgument& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return ImplicitCalibration({std::move(*fitted[0]), std::move(*fitted[1]), std::move(*fitted[2])}, cams);
}

inline json mlp_to_json(const mlp::MlpModel& m) {
  json layers = json::array();
  for (const auto& l : m.layers) layers.push_back({{"weight", detail::matrix_rows(l.weight)}, {"bias", detail::vector_json(l.bias)}});
  return {{"format", "icalib-mlp"},
          {"version", kModelFormatVersion},
          {"spec",
           {{"input_dim", m.spec.input_dim},
            {"hidden", m.spec.hidden},
            {"output_dim", m.spec.output_dim},
            {"negative_slope", m.spec.negative_slope},
            {"dropout", m.spec.dropout}}},
          {"training",
           {{"optimizer", "adam"},
            {"learning_rate", m.config.learning_rate},
            {"epochs", m.config.epochs},
            {"batch_size", m.config.batch_size},
            {"seed", m.config.seed},
            {"final_loss", m.loss_history.empty() ? 0.0 : m.loss_history.back()}}},
          {"input_scaling", detail::scaling_json(m.input_scaling)},
          {"target_scaling", detail::scaling_json(m.target_scaling)},
          {"layers", layers}};
}

inline mlp::MlpModel mlp_from_json(const json& j) {
  detail::check_format(j, "icalib-mlp");
  const json& s = j.at("spec");
  mlp::MlpSpec spec;
  spec.input_dim = detail::require<int>(s, "input_dim", "model.spec");
  spec.hidden = detail::require<std::vector<int>>(s, "hidden", "model.spec");
  spec.output_dim = detail::require<int>(s, "output_dim", "model.spec");
  spec.negative_slope = detail::require<double>(s, "negative_slope", "model.spec");
  spec.dropout = detail::require<double>(s, "dropout", "model.spec");
  mlp::MlpModel m = mlp::zero_model(spec);
  const json& t = j.at("training");
  m.config.learning_rate = detail::require<double>(t, "learning_rate", "model.training");
  m.config.epochs = detail::require<int>(t, "epochs", "model.training");
  m.config.batch_size = detail::require<int>(t, "batch_size", "model.training");
  m.config.seed = detail::require<std::uint64_t>(t, "seed", "model.training");
  m.input_scaling = detail::scaling_from(j.at("input_scaling"), "model.input_scaling");
  m.target_scaling = detail::scaling_from(j.at("target_scaling"), "model.target_scaling");
  const json& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != m.layers.size()) throw ConfigError("model: layer count does not match spec");
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const std::string where = "model.layers[" + std::to_string(k) + "]";
    auto& l = m.layers[k];
    l.weight = detail::matrix_from(layers[k].at("weight"), l.weight.cols(), where + ".weight");
    if (l.weight.rows() != m.layers[k].bias.size()) throw ConfigError(where + ": weight shape does not match spec");
    const Eigen::VectorXd b = detail::vector_from(layers[k], "bias", where);
    if (b.size() != l.bias.size()) throw ConfigError(where + ": bias shape does not match spec");
    l.bias = b;
  }
  return m;
}

}  // namespace icalib::io
