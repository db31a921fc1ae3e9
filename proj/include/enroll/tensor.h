#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "enroll/rng.h"

namespace enroll {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. Rank 1 (vectors) and rank 2 (matrices)
// cover everything this system needs.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> v);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor vec(std::vector<double> v);
    static Tensor mat(size_t rows, size_t cols, std::vector<double> v);
    static Tensor gaussian(Shape s, Rng& rng, double mean = 0.0, double stddev = 0.01);

    size_t numel() const { return values.size(); }
    size_t rank() const { return shape.size(); }
    size_t rows() const;
    size_t cols() const;

    double& at(size_t i) { return values[i]; }
    double at(size_t i) const { return values[i]; }
    double& at(size_t r, size_t c);
    double at(size_t r, size_t c) const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    void fill(double v);
};

// Named trainable tensors, kept in insertion order so that initialization and
// checkpoint layout are deterministic.
class ParameterStore {
  public:
    Tensor& add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }
    size_t total_values() const;
    void zero_all();

  private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> index_;
};

// Checkpoint format: header line "ENROLL-CKPT v1", then a little-endian u64
// tensor count, then per tensor: u32 name length, name bytes, u32 rank,
// u64 dims, f64 row-major values. load_checkpoint requires the destination
// store to already hold every tensor with its configured shape and fails on
// any mismatch.
void save_checkpoint(const std::string& path, const ParameterStore& params);
void load_checkpoint(const std::string& path, ParameterStore& params);

}  // namespace enroll
