#include "illcond/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "illcond/errors.hpp"

namespace illcond::harness {

namespace {

void add_blob(std::vector<double>& img, std::size_t side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = static_cast<double>(side);
  const double cx = (0.2 + 0.6 * u(rng)) * s, cy = (0.2 + 0.6 * u(rng)) * s;
  const double sx = (0.08 + 0.17 * u(rng)) * s, sy = (0.08 + 0.17 * u(rng)) * s;
  const double theta = std::numbers::pi * u(rng);
  const double amp = 0.5 + 0.5 * u(rng);
  const double c = std::cos(theta), sn = std::sin(theta);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t col = 0; col < side; ++col) {
      const double dx = static_cast<double>(col) + 0.5 - cx, dy = static_cast<double>(r) + 0.5 - cy;
      const double a = (c * dx + sn * dy) / sx, b = (-sn * dx + c * dy) / sy;
      img[r * side + col] += amp * std::exp(-0.5 * (a * a + b * b));
    }
  }
}

void add_stroke(std::vector<double>& img, std::size_t side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = static_cast<double>(side);
  const double x0 = u(rng) * s, y0 = u(rng) * s, x1 = u(rng) * s, y1 = u(rng) * s;
  const double amp = 0.1 + 0.1 * u(rng);
  const double vx = x1 - x0, vy = y1 - y0;
  const double len2 = std::max(vx * vx + vy * vy, 1e-12);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t col = 0; col < side; ++col) {
      const double px = static_cast<double>(col) + 0.5, py = static_cast<double>(r) + 0.5;
      const double t = std::clamp(((px - x0) * vx + (py - y0) * vy) / len2, 0.0, 1.0);
      const double dx = px - (x0 + t * vx), dy = py - (y0 + t * vy);
      img[r * side + col] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * 0.6 * 0.6));
    }
  }
}

}  // namespace

Tensor generate_synthetic_dataset(std::uint64_t seed, std::size_t count, std::size_t side) {
  if (count == 0) throw ConfigError("dataset count must be positive");
  if (side < 4) throw ConfigError("image side must be at least 4");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> blobs(1, 3), strokes(1, 2);
  const std::size_t d = side * side;
  std::vector<double> all(count * d);
  std::vector<double> img(d);
  for (std::size_t i = 0; i < count; ++i) {
    std::fill(img.begin(), img.end(), 0.0);
    const int nb = blobs(rng);
    for (int b = 0; b < nb; ++b) add_blob(img, side, rng);
    const int ns = strokes(rng);
    for (int s = 0; s < ns; ++s) add_stroke(img, side, rng);
    for (std::size_t j = 0; j < d; ++j) all[i * d + j] = std::clamp(img[j], 0.0, 1.0);
  }
  return Tensor::matrix(count, d, std::move(all));
}

namespace {

[[noreturn]] void bad_file(const std::filesystem::path& path, const std::string& why) {
  throw EvaluationError(path.string() + ": " + why);
}

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  if (tok.empty()) bad_file(path, "truncated PGM header");
  return tok;
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path, const char* what) {
  const std::string tok = header_token(in, path);
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size() || v == 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    bad_file(path, std::string("invalid ") + what + " '" + tok + "'");
  }
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad_file(path, "cannot open");
  const std::string magic = header_token(in, path);
  if (magic != "P5" && magic != "P2") bad_file(path, "not a PGM file (magic '" + magic + "')");
  GrayImage img;
  img.width = header_number(in, path, "width");
  img.height = header_number(in, path, "height");
  const std::size_t maxval = header_number(in, path, "maxval");
  if (maxval > 255) bad_file(path, "only 8-bit PGM is supported");
  const std::size_t n = img.width * img.height;
  img.pixels.resize(n);
  if (magic == "P5") {
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) bad_file(path, "truncated pixel data");
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = std::min(1.0, raw[i] / static_cast<double>(maxval));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      long v;
      if (!(in >> v) || v < 0 || static_cast<std::size_t>(v) > maxval) bad_file(path, "bad pixel value");
      img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw ShapeError("image size does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvaluationError(path.string() + ": cannot open for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (double v : image.pixels) {
    const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(b));
  }
  if (!out) throw EvaluationError(path.string() + ": write failed");
}

std::vector<double> resample_square(const GrayImage& image, std::size_t side) {
  const std::size_t crop = std::min(image.width, image.height);
  const std::size_t ox = (image.width - crop) / 2, oy = (image.height - crop) / 2;
  const double scale = static_cast<double>(crop) / static_cast<double>(side);
  std::vector<double> out(side * side, 0.0);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      // Source footprint [y0, y1) x [x0, x1) in crop coordinates.
      const double y0 = r * scale, y1 = (r + 1) * scale, x0 = c * scale, x1 = (c + 1) * scale;
      double acc = 0.0, area = 0.0;
      for (auto sy = static_cast<std::size_t>(y0); sy < crop && static_cast<double>(sy) < y1; ++sy) {
        const double wy = std::min(y1, sy + 1.0) - std::max(y0, static_cast<double>(sy));
        for (auto sx = static_cast<std::size_t>(x0); sx < crop && static_cast<double>(sx) < x1; ++sx) {
          const double wx = std::min(x1, sx + 1.0) - std::max(x0, static_cast<double>(sx));
          acc += wx * wy * image.pixels[(oy + sy) * image.width + ox + sx];
          area += wx * wy;
        }
      }
      out[r * side + c] = acc / area;
    }
  }
  return out;
}

Tensor load_image_dir(const std::filesystem::path& dir, std::size_t side) {
  if (side < 1) throw ConfigError("image side must be positive");
  if (!std::filesystem::is_directory(dir)) throw EvaluationError(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  if (files.empty()) throw EvaluationError(dir.string() + ": no PGM images found");
  std::sort(files.begin(), files.end());
  std::vector<double> all;
  all.reserve(files.size() * side * side);
  for (const auto& f : files) {
    auto px = resample_square(read_pgm(f), side);
    all.insert(all.end(), px.begin(), px.end());
  }
  return Tensor::matrix(files.size(), side * side, std::move(all));
}

}  // namespace illcond::harness
