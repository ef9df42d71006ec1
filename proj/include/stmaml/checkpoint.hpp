#pragma once

#include <iosfwd>
#include <string>

#include "stmaml/engine.hpp"

namespace stmaml {

/// Flat JSON parameter format: {module -> layer index -> {"w": nested, "b": flat}}
/// plus a header carrying dims and the config hash.
struct CheckpointHeader {
  std::string algorithm = "stmaml";
  std::size_t step = 0;
  std::size_t task_d_in = 0;
  std::size_t task_d_out = 0;
  std::string config_hash;
};

void save_checkpoint(const StMamlParams& params, const CheckpointHeader& header, std::ostream& out);
void save_checkpoint(const MamlParams& params, const CheckpointHeader& header,
                     const std::vector<std::size_t>& learner_dims, std::ostream& out);

CheckpointHeader peek_header(std::istream& in);
StMamlParams load_stmaml_checkpoint(std::istream& in, CheckpointHeader* header = nullptr);
MamlParams load_maml_checkpoint(std::istream& in, CheckpointHeader* header = nullptr);

}  // namespace stmaml
