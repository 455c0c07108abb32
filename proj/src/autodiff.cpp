#include "vgamba/autodiff.hpp"

#include <unordered_set>

namespace vgamba {

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  Var v;
  v.n_ = std::make_shared<detail::Node<T>>();
  v.n_->value = std::move(value);
  v.n_->requires_grad = requires_grad;
  v.n_->is_leaf = true;
  return v;
}

template <typename T>
Var<T> Var<T>::op(Tensor<T> value, std::vector<Var> parents,
                  std::function<void(detail::Node<T>&)> backward) {
  Var v;
  v.n_ = std::make_shared<detail::Node<T>>();
  v.n_->value = std::move(value);
  bool track = grad_enabled();
  if (track) {
    track = false;
    for (const Var& p : parents)
      if (p.requires_grad()) {
        track = true;
        break;
      }
  }
  if (track) {
    v.n_->requires_grad = true;
    v.n_->parents = std::move(parents);
    v.n_->backward = std::move(backward);
  }
  return v;
}

template <typename T>
Tensor<T>& Var<T>::grad() {
  if (!n_->grad.defined()) n_->grad = Tensor<T>(n_->value.shape());
  return n_->grad;
}

template <typename T>
void Var<T>::zero_grad() {
  if (n_ && n_->grad.defined()) n_->grad.fill(T(0));
}

template <typename T>
void Var<T>::accumulate(const Tensor<T>& g) {
  if (!requires_grad()) return;
  if (!n_->grad.defined()) n_->grad = Tensor<T>(n_->value.shape());
  n_->grad.add_(g);
}

template <typename T>
void Var<T>::backward() {
  if (!n_) throw ShapeError("backward on undefined Var");
  if (n_->value.numel() != 1) throw ShapeError("backward requires a scalar output");
  if (!n_->requires_grad) return;

  // Iterative post-order DFS; children appear after all ancestors they feed.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, size_t>> stack;
  stack.emplace_back(n_.get(), 0);
  seen.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<T>* p = node->parents[next].node();
      ++next;
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  grad() = Tensor<T>::ones(n_->value.shape());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* node = *it;
    if (node->backward && node->grad.defined()) node->backward(*node);
  }
}

template class Var<float>;
template class Var<double>;

}  // namespace vgamba
