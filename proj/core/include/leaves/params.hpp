#pragma once

#include <string>
#include <vector>

#include "leaves/tensor.hpp"

namespace leaves {

/// Named, shaped parameter slot. Non-trainable entries carry state such as
/// batch-norm running statistics; the optimizer skips them.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  bool trainable = true;
};

/// Flat registry of parameters with checkpoint I/O. Declaration order is
/// the serialization order.
class ParamStore {
 public:
  std::size_t add(std::string name, Shape shape, std::vector<double> value,
                  bool trainable = true);
  std::size_t add(std::string name, Shape shape, double fill, bool trainable = true);

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  std::size_t count() const { return params_.size(); }

  Param& by_name(const std::string& name);
  const Param& by_name(const std::string& name) const;
  bool has(const std::string& name) const;

  std::size_t total_scalars() const;
  std::size_t trainable_scalars() const;
  bool all_finite() const;

  /// Binary checkpoint: magic "LEAV", version u32, scalar count u64, then
  /// little-endian 64-bit floats in declaration order. A sidecar text
  /// manifest (<path>.manifest) lists names and shapes.
  void save_checkpoint(const std::string& path) const;
  /// Loads values into an already-declared store; shape/count mismatch or a
  /// bad header is an error.
  void load_checkpoint(const std::string& path);

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<Param> params_;
};

}  // namespace leaves
