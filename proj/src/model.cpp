#include "gfz/model.hpp"

#include <algorithm>

namespace gfz {

std::string architecture_tag(Architecture arch) {
  return arch == Architecture::MiniResNet ? "mini-resnet" : "mlp";
}

Architecture parse_architecture(const std::string& tag) {
  if (tag == "mini-resnet") return Architecture::MiniResNet;
  if (tag == "mlp") return Architecture::Mlp;
  throw ConfigError("unknown architecture tag '" + tag + "'");
}

int BlockPartition::block_of(int layer) const {
  for (std::size_t j = 0; j < blocks.size(); ++j)
    if (std::find(blocks[j].begin(), blocks[j].end(), layer) != blocks[j].end())
      return static_cast<int>(j);
  throw ConfigError("block_of: layer " + std::to_string(layer) + " is in no block");
}

void BlockPartition::validate(int layer_count) const {
  std::vector<int> seen(static_cast<std::size_t>(layer_count), 0);
  for (const auto& block : blocks) {
    if (block.empty()) throw ConfigError("block partition: empty block");
    for (int i : block) {
      if (i < 0 || i >= layer_count)
        throw ConfigError("block partition: layer index " + std::to_string(i) + " out of range");
      if (seen[i]++) throw ConfigError("block partition: layer " + std::to_string(i) + " in two blocks");
    }
  }
  for (int i = 0; i < layer_count; ++i)
    if (!seen[i]) throw ConfigError("block partition: layer " + std::to_string(i) + " not covered");
  if (blocks.empty() || blocks.back().back() != layer_count - 1)
    throw ConfigError("block partition: classifier must be in the last block");
}

}  // namespace gfz
