#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vgamba/autodiff.hpp"
#include "vgamba/random.hpp"

namespace vgamba {

// Initialization context: root seed plus the module path accumulated while the
// model tree is constructed. Every parameter draws from a stream derived from
// (root, full path), so a module at the same path initializes identically no
// matter what the rest of the model looks like.
struct InitCtx {
  uint64_t root_seed = 0;
  std::string path;

  InitCtx child(const std::string& name) const {
    InitCtx c;
    c.root_seed = root_seed;
    c.path = path.empty() ? name : path + "." + name;
    return c;
  }
  Rng rng(const std::string& param_name) const {
    return Rng(derive_seed(root_seed, path.empty() ? param_name : path + "." + param_name));
  }
};

// Base class for model components. Parameters are learnable; buffers are
// persistent state (e.g. running statistics) that is checkpointed but not
// trained. Children are registered non-owning (members of the parent).
template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<std::pair<std::string, Var<T>>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor<T>*>> named_buffers() const;
  int64_t parameter_count() const;
  void zero_grad();
  void set_training(bool training);
  bool training() const { return training_; }
  const std::string& path() const { return path_; }

 protected:
  void set_path(const std::string& p) { path_ = p; }
  void register_parameter(const std::string& name, Var<T> p);
  void register_buffer(const std::string& name, Tensor<T>* buf);
  void register_module(const std::string& name, Module<T>* m);

 private:
  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Var<T>>>& out) const;
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor<T>*>>& out) const;

  std::string path_;
  bool training_ = true;
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers_;
  std::vector<std::pair<std::string, Module<T>*>> children_;
};

// When a probe is active, checkpoints call report() with module path + output;
// the first non-finite output is remembered. Used to attribute a diverged loss.
class NanProbe {
 public:
  static bool active();
  static void enable();
  static void disable();
  static const std::string& first_offender();
  template <typename T>
  static void report(const std::string& path, const Tensor<T>& value) {
    if (!active() || !first_path().empty()) return;
    if (!value.all_finite()) first_path() = path;
  }

 private:
  static std::string& first_path();
};

extern template class Module<float>;
extern template class Module<double>;

}  // namespace vgamba
