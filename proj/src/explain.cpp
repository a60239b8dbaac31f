#include "octseq/explain.hpp"

#include <cmath>
#include <cstdlib>

#include "octseq/data.hpp"
#include "octseq/png.hpp"

namespace octseq::explain {

namespace {

void check_row_stochastic(const Eigen::MatrixXd& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m.row(i).minCoeff() < -1e-12)
      throw DataError(std::string(what) + ": negative attention entry");
    if (std::abs(m.row(i).sum() - 1.0) > 1e-6)
      throw DataError(std::string(what) + ": row " + std::to_string(i) +
                      " does not sum to 1");
  }
}

}  // namespace

RolloutMap attention_rollout(const features::AttentionStack& stack) {
  if (stack.layers.empty()) throw DataError("attention stack is empty");
  const Eigen::Index t = stack.layers.front().rows();
  const int grid = static_cast<int>(std::lround(std::sqrt(
      static_cast<double>(t - 1))));
  if (t < 2 || static_cast<Eigen::Index>(grid) * grid != t - 1)
    throw DataError("token count must be 1 + a square patch grid");

  Eigen::MatrixXd rollout = Eigen::MatrixXd::Identity(t, t);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(t, t);
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const Eigen::MatrixXd& a = stack.layers[l];
    if (a.rows() != t || a.cols() != t)
      throw DataError("attention layers disagree on token count");
    check_row_stochastic(a, "attention input");
    Eigen::MatrixXd mixed = 0.5 * a + 0.5 * eye;
    for (Eigen::Index i = 0; i < t; ++i) mixed.row(i) /= mixed.row(i).sum();
    rollout = mixed * rollout;
    check_row_stochastic(rollout, "rollout product");
  }

  RolloutMap map;
  map.volume_id = stack.volume_id;
  map.slice_index = stack.slice_index;
  map.rollout = rollout;
  map.heatmap.resize(grid, grid);
  const Eigen::VectorXd relevance =
      rollout.row(0).tail(t - 1).transpose();  // class token over patches
  const double lo = relevance.minCoeff();
  const double hi = relevance.maxCoeff();
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const double v = relevance(i * grid + j);
      map.heatmap(i, j) = hi - lo > 1e-300 ? (v - lo) / (hi - lo) : 0.5;
    }
  return map;
}

void render_heatmap(const RolloutMap& map, const Eigen::MatrixXd& slice01,
                    const std::filesystem::path& png_path) {
  const int h = static_cast<int>(slice01.rows());
  const int w = static_cast<int>(slice01.cols());
  if (h < 2 || w < 2) throw DataError("slice too small to render");
  const Eigen::MatrixXd up = data::bilinear_resize(map.heatmap, h, w);

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  std::size_t k = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = std::min(std::max(slice01(y, x), 0.0), 1.0);
      const double t = std::min(std::max(up(y, x), 0.0), 1.0);
      // Cold-to-hot map blended over the grayscale slice.
      const double cr = t;
      const double cg = 4.0 * t * (1.0 - t);
      const double cb = 1.0 - t;
      const double r = 0.55 * g + 0.45 * cr;
      const double gg = 0.55 * g + 0.45 * cg;
      const double b = 0.55 * g + 0.45 * cb;
      rgb[k++] = static_cast<std::uint8_t>(std::lround(255.0 * r));
      rgb[k++] = static_cast<std::uint8_t>(std::lround(255.0 * gg));
      rgb[k++] = static_cast<std::uint8_t>(std::lround(255.0 * b));
    }
  png::write_rgb8(png_path, rgb, w, h);
}

void export_embeddings(const EmbeddingExport& exp,
                       const std::filesystem::path& path) {
  const std::size_t n = static_cast<std::size_t>(exp.rows.rows());
  if (exp.labels.size() != n || exp.ids.size() != n)
    throw DataError("embedding rows, labels, and ids must align");
  std::string out = "id,label";
  for (Eigen::Index j = 0; j < exp.rows.cols(); ++j)
    out += ",f" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    out += exp.ids[i] + "," + std::to_string(exp.labels[i]);
    for (Eigen::Index j = 0; j < exp.rows.cols(); ++j)
      out += "," + format_g17(exp.rows(i, j));
    out += "\n";
  }
  io::write_file_atomic(path, out);
}

EmbeddingExport read_embeddings(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < bytes.size()) {
    const std::size_t end = bytes.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(bytes.substr(start));
      break;
    }
    lines.push_back(bytes.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) throw DataError("empty embedding file");
  const std::vector<std::string> header = split(lines[0], ',');
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw DataError("unexpected embedding header");
  const int d = static_cast<int>(header.size()) - 2;

  EmbeddingExport exp;
  exp.rows.resize(static_cast<Eigen::Index>(lines.size()) - 1, d);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      exp.rows.conservativeResize(i - 1, d);
      break;
    }
    const std::vector<std::string> fields = split(lines[i], ',');
    if (fields.size() != header.size())
      throw DataError("embedding row " + std::to_string(i) +
                      " has wrong field count");
    exp.ids.push_back(fields[0]);
    exp.labels.push_back(std::atoi(fields[1].c_str()));
    for (int j = 0; j < d; ++j)
      exp.rows(i - 1, j) = std::strtod(fields[2 + j].c_str(), nullptr);
  }
  return exp;
}

}  // namespace octseq::explain
