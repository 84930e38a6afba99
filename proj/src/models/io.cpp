#include "illcond/models/io.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "illcond/errors.hpp"

namespace illcond::models {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_model(const AutoencoderModel& model) {
  model.validate();
  std::string out;
  out += "illcond-model 1\n";
  out += "layers " + std::to_string(model.layers.size()) + "\n";
  out += "latent_index " + std::to_string(model.latent_index) + "\n";
  out += "variational " + std::string(model.variational ? "1" : "0") + "\n";
  out += "beta " + format_double(model.beta) + "\n";
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    out += "layer " + std::to_string(i) + " out " + std::to_string(l.out()) + " in " + std::to_string(l.in()) +
           " activation " + std::string(activation_name(l.activation)) + "\n";
    out += "weight";
    for (double v : l.weight.values()) out += " " + format_double(v);
    out += "\nbias";
    for (double v : l.bias.values()) out += " " + format_double(v);
    out += "\n";
  }
  out += "end\n";
  return out;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::size_t offset() const { return pos_; }

  std::string_view word() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) throw ParseError("unexpected end of model file", pos_);
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view keyword) {
    const std::size_t at = skip_ws();
    std::string_view w = word();
    if (w != keyword) {
      throw ParseError("expected '" + std::string(keyword) + "', found '" + std::string(w) + "'", at);
    }
  }

  std::size_t count() {
    const std::size_t at = skip_ws();
    std::string_view w = word();
    std::size_t v = 0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      throw ParseError("expected an unsigned integer, found '" + std::string(w) + "'", at);
    }
    return v;
  }

  double number() {
    const std::size_t at = skip_ws();
    std::string_view w = word();
    double v = 0.0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      throw ParseError("expected a number, found '" + std::string(w) + "'", at);
    }
    return v;
  }

  std::size_t skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return pos_;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

AutoencoderModel parse_model(std::string_view text) {
  Reader r(text);
  r.expect("illcond-model");
  const std::size_t version_at = r.skip_ws();
  if (r.count() != 1) throw ParseError("unsupported model format version", version_at);
  r.expect("layers");
  const std::size_t n_layers = r.count();
  r.expect("latent_index");
  AutoencoderModel m;
  m.latent_index = r.count();
  r.expect("variational");
  const std::size_t var_at = r.skip_ws();
  const std::size_t variational = r.count();
  if (variational > 1) throw ParseError("variational flag must be 0 or 1", var_at);
  m.variational = variational == 1;
  r.expect("beta");
  m.beta = r.number();

  for (std::size_t i = 0; i < n_layers; ++i) {
    r.expect("layer");
    const std::size_t idx_at = r.skip_ws();
    if (r.count() != i) throw ParseError("layers out of order", idx_at);
    r.expect("out");
    const std::size_t rows = r.count();
    r.expect("in");
    const std::size_t cols = r.count();
    if (rows == 0 || cols == 0) throw ParseError("layer with zero extent", r.offset());
    r.expect("activation");
    const std::size_t act_at = r.skip_ws();
    Activation act;
    try {
      act = parse_activation(r.word());
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), act_at);
    }
    r.expect("weight");
    std::vector<double> w(rows * cols);
    for (double& v : w) v = r.number();
    r.expect("bias");
    std::vector<double> b(rows);
    for (double& v : b) v = r.number();
    m.layers.push_back(LayerSpec{Tensor::matrix(rows, cols, std::move(w)), Tensor::vector(std::move(b)), act});
  }
  r.expect("end");
  m.validate();
  return m;
}

void save_model(const AutoencoderModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_model(model);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

AutoencoderModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace illcond::models
