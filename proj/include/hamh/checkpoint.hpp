#pragma once

#include "hamh/tensor.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace hamh::nn {

// Ordered name -> tensor table. Insertion order is the serialization order,
// so identical construction code yields byte-identical checkpoints.
class ParamRegistry {
 public:
  void add(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Versioned plain-text checkpoint format:
//   hamh-checkpoint v1
//   meta <key> <value>
//   param <name> <rank> <dims...>
//   <row-major values, one storage row per line, full f64 precision>
//   end
using MetaMap = std::map<std::string, std::string>;

void save_checkpoint(std::ostream& os, const ParamRegistry& params, const MetaMap& meta);
void save_checkpoint(const std::string& path, const ParamRegistry& params, const MetaMap& meta);

// Loads values into an existing registry. Every parameter in the registry
// must be present in the file with an identical shape and vice versa;
// mismatches throw with the parameter name.
MetaMap load_checkpoint(std::istream& is, ParamRegistry& params);
MetaMap load_checkpoint(const std::string& path, ParamRegistry& params);

// Reads only the meta table (cheap; used to rebuild network dimensions
// before constructing parameters).
MetaMap peek_checkpoint_meta(const std::string& path);

}  // namespace hamh::nn
