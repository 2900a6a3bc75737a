#ifndef REC4AD_DIFFCORE_PARAMETER_STORE_H_
#define REC4AD_DIFFCORE_PARAMETER_STORE_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rec4ad/diffcore/tape.h"

namespace rec4ad::diffcore {

struct Parameter {
  Matrix value;
  Matrix grad;
  // Adam moments; same shape as value.
  Matrix first_moment;
  Matrix second_moment;
  std::int64_t step = 0;
  // Non-trainable entries (running statistics) are stored and checkpointed
  // alongside the weights but skipped by the optimizer.
  bool trainable = true;
};

// Named parameters in a deterministic (lexicographic) order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }

  // Checkpoint container, little-endian:
  //   "R4ADPSTO" | u32 version | u64 header length | header bytes |
  //   u64 count | per parameter, in name order:
  //     u32 name length | name | u8 trainable | u64 rows | u64 cols |
  //     f64[rows*cols] value | f64[...] first moment | f64[...] second moment |
  //     i64 step
  // `header` is opaque to the store (the model stores its config there).
  void save(std::ostream& out, const std::string& header) const;
  // Replaces the contents; returns the header.
  std::string load(std::istream& in);

 private:
  std::map<std::string, Parameter> params_;
};

}  // namespace rec4ad::diffcore

#endif  // REC4AD_DIFFCORE_PARAMETER_STORE_H_
