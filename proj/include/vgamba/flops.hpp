#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace vgamba {

// Multiply-accumulate counter. Counts conv / linear / matmul / scan /
// discretization MACs only; normalization, activations, elementwise products
// and pooling are excluded by convention. Counts attach to the innermost
// active module scope, so per-module entries sum exactly to the total.
class FlopRecorder {
 public:
  static FlopRecorder* active();
  static void add(int64_t macs);

  int64_t total() const { return total_; }
  const std::map<std::string, int64_t>& by_scope() const { return by_scope_; }
  int64_t prefix_total(const std::string& prefix) const;

 private:
  friend class FlopCapture;
  friend class FlopScope;
  int64_t total_ = 0;
  std::map<std::string, int64_t> by_scope_;
};

// Activates a recorder on this thread for its lifetime.
class FlopCapture {
 public:
  explicit FlopCapture(FlopRecorder& r);
  ~FlopCapture();
  FlopCapture(const FlopCapture&) = delete;
  FlopCapture& operator=(const FlopCapture&) = delete;

 private:
  FlopRecorder* prev_;
};

// Names the module whose forward is running; nests.
class FlopScope {
 public:
  explicit FlopScope(const std::string& path);
  ~FlopScope();
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  std::string prev_;
  bool active_;
};

}  // namespace vgamba
