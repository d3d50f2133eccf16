#include "gfz/checkpoint.hpp"

#include "gfz/binary_io.hpp"

namespace gfz {
namespace {

void write_shape(ByteWriter& w, const Shape& shape) {
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
}

Shape read_shape(ByteReader& r) {
  Shape s(r.u8());
  for (auto& d : s) {
    const auto v = r.u32();
    if (v == 0 || v > 0x7fffffffu) throw FormatError("checkpoint: invalid dimension " + std::to_string(v));
    d = static_cast<int>(v);
  }
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  ByteWriter w;
  w.tag("GFZC");
  w.u16(kCheckpointVersion);
  w.str(architecture_tag(model.architecture));
  w.u32(static_cast<std::uint32_t>(2 * model.layers.size()));
  for (const auto& l : model.layers) {
    w.str(l.name + ".weight");
    write_shape(w, l.weight.shape());
    w.str(l.name + ".bias");
    write_shape(w, l.bias.shape());
  }
  for (const auto& l : model.layers)
    for (const auto* p : l.params())
      for (float v : p->data()) w.f32(v);
  return w.bytes();
}

Model decode_checkpoint(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_tag("GFZC");
  const auto version = r.u16();
  if (version != kCheckpointVersion) throw FormatError("unsupported GFZC version " + std::to_string(version));
  Model m;
  try {
    m.architecture = parse_architecture(r.str());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const auto count = r.u32();
  if (count == 0 || count % 2 != 0) throw FormatError("checkpoint: parameter count must be a positive even number");

  for (std::uint32_t i = 0; i < count; i += 2) {
    const std::string wname = r.str();
    const Shape wshape = read_shape(r);
    const std::string bname = r.str();
    const Shape bshape = read_shape(r);
    const auto suffix = std::string(".weight");
    if (wname.size() <= suffix.size() || wname.compare(wname.size() - suffix.size(), suffix.size(), suffix) != 0)
      throw FormatError("checkpoint: expected a .weight entry, got '" + wname + "'");
    Layer<float> l;
    l.name = wname.substr(0, wname.size() - suffix.size());
    if (bname != l.name + ".bias") throw FormatError("checkpoint: expected '" + l.name + ".bias', got '" + bname + "'");
    if (wshape.size() == 4 && wshape[2] == 3 && wshape[3] == 3)
      l.kind = LayerKind::Conv;
    else if (wshape.size() == 2)
      l.kind = LayerKind::Dense;
    else
      throw FormatError("checkpoint: unsupported weight shape " + shape_string(wshape) + " for " + l.name);
    const int out = l.kind == LayerKind::Conv ? wshape[0] : wshape[1];
    if (bshape != Shape{out}) throw FormatError("checkpoint: bias shape mismatch for " + l.name);
    l.weight = Tensor<float>(wshape);
    l.bias = Tensor<float>(bshape);
    m.layers.push_back(std::move(l));
  }
  for (auto& l : m.layers)
    for (auto* p : l.params())
      for (auto& v : p->data()) v = r.f32();
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after parameter data");

  const auto& first = m.layers.front().weight;
  m.input_channels = m.layers.front().kind == LayerKind::Conv ? first.dim(1) : first.dim(0);
  if (m.layers.back().kind != LayerKind::Dense) throw FormatError("checkpoint: last layer must be dense");
  if (m.architecture == Architecture::MiniResNet) {
    if (m.layers.size() != 8) throw FormatError("checkpoint: mini-resnet needs 8 layers");
    m.partition.blocks = {{0}, {1, 2}, {3, 4}, {5, 6}, {7}};
  } else {
    for (int i = 0; i < m.layer_count(); ++i) m.partition.blocks.push_back({i});
  }
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  ByteWriter w;
  w.raw(encode_checkpoint(model));
  w.save(path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return decode_checkpoint(std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {}));
}

}  // namespace gfz
