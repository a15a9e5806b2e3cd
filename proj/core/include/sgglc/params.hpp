#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sgglc/autograd.hpp"
#include "sgglc/sgt_io.hpp"

namespace sgglc {

// Named learnable tensors with gradient slots. Insertion order is the
// deterministic iteration order; names are unique.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;  // empty until a backward pass collects into it
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(value), Tensor<T>(), trainable});
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second];
  }
  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second];
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void zero_grads() {
    for (Entry& e : entries_)
      if (!e.grad.empty()) e.grad.fill(T(0));
  }

  // Element count over trainable tensors, each counted once.
  i64 trainable_count() const {
    i64 total = 0;
    for (const Entry& e : entries_)
      if (e.trainable) total += e.value.count();
    return total;
  }

  bool same_bits(const ParameterStore& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != o.entries_[i].name) return false;
      if (!entries_[i].value.same_bits(o.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Memoizing bridge between a store and a graph: one leaf per parameter per
// forward pass, so reusing a parameter accumulates into a single gradient.
template <typename T>
class ParamCtx {
 public:
  ParamCtx(Graph<T>& g, ParameterStore<T>& store) : g_(&g), store_(&store) {}

  Val<T> leaf(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return Val<T>{g_, it->second};
    auto& e = store_->at(name);
    const int id = g_->leaf(e.value, e.trainable);
    ids_[name] = id;
    return Val<T>{g_, id};
  }

  // Copies accumulated node gradients back into the store. Trainable
  // parameters that were never touched get zero gradients.
  void collect_grads() {
    for (auto& e : store_->entries()) {
      if (!e.trainable) continue;
      auto it = ids_.find(e.name);
      if (it != ids_.end() && g_->has_grad(it->second))
        e.grad = g_->grad(it->second);
      else
        e.grad = Tensor<T>(e.value.shape(), T(0));
    }
  }

  Graph<T>& graph() { return *g_; }

 private:
  Graph<T>* g_;
  ParameterStore<T>* store_;
  std::unordered_map<std::string, int> ids_;
};

// ---- checkpoint / weight-bundle directory format ----
// <dir>/manifest.json lists {name, dims, file, trainable}; each tensor is a
// standalone SGT1 file.

struct TensorMeta {
  std::string name;
  std::vector<i64> dims;
  std::string file;
  bool trainable = true;
};

void write_manifest(const std::string& dir, const std::vector<TensorMeta>& metas);
std::vector<TensorMeta> read_manifest(const std::string& dir);
std::string sanitize_tensor_filename(const std::string& name);

template <typename T>
void save_store(const ParameterStore<T>& store, const std::string& dir) {
  std::vector<TensorMeta> metas;
  for (const auto& e : store.entries()) {
    TensorMeta m;
    m.name = e.name;
    const Shape& s = e.value.shape();
    m.dims = {s.n, s.c, s.h, s.w};
    m.file = sanitize_tensor_filename(e.name) + ".sgt";
    m.trainable = e.trainable;
    metas.push_back(m);
  }
  write_manifest(dir, metas);
  for (size_t i = 0; i < metas.size(); ++i)
    save_sgt(dir + "/" + metas[i].file, store.entries()[i].value);
}

template <typename T>
ParameterStore<T> load_store(const std::string& dir) {
  ParameterStore<T> store;
  for (const TensorMeta& m : read_manifest(dir)) {
    Tensor<T> t = load_sgt<T>(dir + "/" + m.file);
    if (m.dims.size() != 4)
      throw FormatError("manifest dims must be rank 4 for " + m.name);
    const Shape want(m.dims[0], m.dims[1], m.dims[2], m.dims[3]);
    if (t.shape() != want)
      throw FormatError("tensor " + m.name + " dims " + t.shape().str() +
                        " do not match manifest " + want.str());
    store.add(m.name, std::move(t), m.trainable);
  }
  return store;
}

}  // namespace sgglc
