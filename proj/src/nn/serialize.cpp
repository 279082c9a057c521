#include "kws/nn/serialize.hpp"

#include <algorithm>

#include "kws/binary_io.hpp"
#include "kws/error.hpp"

namespace kws::nn {
namespace {

void put_params(io::ByteWriter& w, const std::vector<LayerParams>& params) {
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.weight.rows()));
    w.u32(static_cast<std::uint32_t>(p.weight.cols()));
    for (Eigen::Index r = 0; r < p.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < p.weight.cols(); ++c) w.f64(p.weight(r, c));
    w.u32(static_cast<std::uint32_t>(p.bias.size()));
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) w.f64(p.bias[i]);
  }
}

std::vector<LayerParams> get_params(io::ByteReader& r, const std::vector<LayerParams>& like) {
  std::vector<LayerParams> out(like.size());
  for (std::size_t l = 0; l < like.size(); ++l) {
    const auto at = r.offset();
    const auto rows = r.u32("weight rows");
    const auto cols = r.u32("weight cols");
    if (rows != like[l].weight.rows() || cols != like[l].weight.cols())
      throw FormatError("layer " + std::to_string(l) + " weight shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " does not match the spec",
                        at);
    r.need(8ull * rows * cols, "weights");
    out[l].weight.resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) out[l].weight(i, j) = r.f64();
    const auto bat = r.offset();
    const auto n = r.u32("bias length");
    if (n != like[l].bias.size())
      throw FormatError("layer " + std::to_string(l) + " bias length does not match the spec", bat);
    r.need(8ull * n, "bias");
    out[l].bias.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) out[l].bias[i] = r.f64();
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const NetworkSpec& spec, const NetworkState& state) {
  if (state.params.size() != spec.layers.size()) throw ConfigError("state does not match spec");
  io::ByteWriter w;
  w.magic("KWSM");
  w.u16(kModelFormatVersion);
  w.bytes(spec.hash());
  w.str(spec.canonical_text());
  put_params(w, state.params);
  const bool slots = state.slot1.size() == state.params.size() && state.slot2.size() == state.params.size();
  w.bytes(std::vector<std::uint8_t>{static_cast<std::uint8_t>(slots ? 1 : 0)});
  if (slots) {
    put_params(w, state.slot1);
    put_params(w, state.slot2);
  }
  w.u64(state.epochs_completed);
  w.u64(state.step);
  w.u64(state.seed);
  return w.release();
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("KWSM", "model file");
  const auto vat = r.offset();
  const auto version = r.u16("format version");
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version), vat);
  const auto hat = r.offset();
  const std::string stored_hash = r.chars(32, "spec hash");
  const std::string text = r.str("spec text");
  Model m;
  try {
    m.spec = NetworkSpec::parse(text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedded spec is invalid: ") + e.what(), hat + 32);
  }
  const auto h = m.spec.hash();
  if (!std::equal(h.begin(), h.end(), stored_hash.begin(),
                  [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); }))
    throw FormatError("spec hash does not match embedded spec text", hat);

  const NetworkState shape = init_state(m.spec, 0);
  m.state.params = get_params(r, shape.params);
  const auto slots = r.chars(1, "slot flag");
  if (slots[0] == 1) {
    m.state.slot1 = get_params(r, shape.params);
    m.state.slot2 = get_params(r, shape.params);
  } else if (slots[0] != 0) {
    throw FormatError("bad optimizer slot flag", r.offset() - 1);
  }
  m.state.epochs_completed = r.u64("epochs");
  m.state.step = r.u64("step");
  m.state.seed = r.u64("seed");
  if (r.remaining() != 0) throw FormatError("trailing bytes in model file", r.offset());
  return m;
}

void save_state(const std::filesystem::path& path, const NetworkSpec& spec, const NetworkState& state) {
  io::write_file(path, encode_model(spec, state));
}

Model load_model(const std::filesystem::path& path) { return decode_model(io::read_file(path)); }

NetworkState load_state(const std::filesystem::path& path, const NetworkSpec& expected) {
  auto m = load_model(path);
  if (m.spec.hash() != expected.hash())
    throw ConfigError("model file " + path.string() + " was saved for a different network spec");
  return std::move(m.state);
}

}  // namespace kws::nn
