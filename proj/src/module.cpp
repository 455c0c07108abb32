#include "vgamba/module.hpp"

#include "vgamba/flops.hpp"

namespace vgamba {

template <typename T>
std::vector<std::pair<std::string, Var<T>>> Module<T>::named_parameters() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  collect_params("", out);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Module<T>::named_buffers() const {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  collect_buffers("", out);
  return out;
}

template <typename T>
int64_t Module<T>::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, p] : named_parameters()) n += p.numel();
  return n;
}

template <typename T>
void Module<T>::zero_grad() {
  for (auto& [name, p] : named_parameters()) const_cast<Var<T>&>(p).zero_grad();
}

template <typename T>
void Module<T>::set_training(bool training) {
  training_ = training;
  for (auto& [name, m] : children_) m->set_training(training);
}

template <typename T>
void Module<T>::register_parameter(const std::string& name, Var<T> p) {
  params_.emplace_back(name, std::move(p));
}

template <typename T>
void Module<T>::register_buffer(const std::string& name, Tensor<T>* buf) {
  buffers_.emplace_back(name, buf);
}

template <typename T>
void Module<T>::register_module(const std::string& name, Module<T>* m) {
  children_.emplace_back(name, m);
}

template <typename T>
void Module<T>::collect_params(const std::string& prefix,
                               std::vector<std::pair<std::string, Var<T>>>& out) const {
  for (const auto& [name, p] : params_) out.emplace_back(prefix.empty() ? name : prefix + "." + name, p);
  for (const auto& [name, m] : children_)
    m->collect_params(prefix.empty() ? name : prefix + "." + name, out);
}

template <typename T>
void Module<T>::collect_buffers(const std::string& prefix,
                                std::vector<std::pair<std::string, Tensor<T>*>>& out) const {
  for (const auto& [name, b] : buffers_)
    out.emplace_back(prefix.empty() ? name : prefix + "." + name, b);
  for (const auto& [name, m] : children_)
    m->collect_buffers(prefix.empty() ? name : prefix + "." + name, out);
}

template class Module<float>;
template class Module<double>;

// ---- FlopRecorder ----

namespace {
thread_local FlopRecorder* g_recorder = nullptr;
thread_local std::string g_scope;
}  // namespace

FlopRecorder* FlopRecorder::active() { return g_recorder; }

void FlopRecorder::add(int64_t macs) {
  if (FlopRecorder* r = g_recorder) {
    r->total_ += macs;
    r->by_scope_[g_scope] += macs;
  }
}

int64_t FlopRecorder::prefix_total(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& [scope, macs] : by_scope_)
    if (scope.rfind(prefix, 0) == 0) n += macs;
  return n;
}

FlopCapture::FlopCapture(FlopRecorder& r) : prev_(g_recorder) { g_recorder = &r; }
FlopCapture::~FlopCapture() { g_recorder = prev_; }

FlopScope::FlopScope(const std::string& path) : active_(g_recorder != nullptr) {
  if (active_) {
    prev_ = g_scope;
    g_scope = path;
  }
}
FlopScope::~FlopScope() {
  if (active_) g_scope = prev_;
}

// ---- NanProbe ----

namespace {
thread_local bool g_probe_active = false;
}

std::string& NanProbe::first_path() {
  thread_local std::string path;
  return path;
}

bool NanProbe::active() { return g_probe_active; }

void NanProbe::enable() {
  g_probe_active = true;
  first_path().clear();
}

void NanProbe::disable() { g_probe_active = false; }

const std::string& NanProbe::first_offender() { return first_path(); }

}  // namespace vgamba
