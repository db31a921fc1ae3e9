#include "enroll/tensor.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "enroll/errors.h"

namespace enroll {

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

static size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) {
        if (d == 0) throw DimError("tensor dims must be positive, got " + shape_str(s));
        n *= d;
    }
    return s.empty() ? 0 : n;
}

Tensor::Tensor(Shape s) : shape(std::move(s)) { values.assign(shape_numel(shape), 0.0); }

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_numel(shape)) {
        throw DimError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::vec(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::mat(size_t rows, size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
}

Tensor Tensor::gaussian(Shape s, Rng& rng, double mean, double stddev) {
    Tensor t(std::move(s));
    for (double& v : t.values) v = rng.gaussian(mean, stddev);
    return t;
}

size_t Tensor::rows() const {
    if (rank() != 2) throw DimError("rows() on tensor of shape " + shape_str(shape));
    return shape[0];
}

size_t Tensor::cols() const {
    if (rank() != 2) throw DimError("cols() on tensor of shape " + shape_str(shape));
    return shape[1];
}

double& Tensor::at(size_t r, size_t c) { return values[r * cols() + c]; }

double Tensor::at(size_t r, size_t c) const { return values[r * shape[1] + c]; }

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : values) x = v;
}

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
    if (has(name)) throw DataError("duplicate parameter name: " + name);
    order_.push_back(name);
    return index_.emplace(name, std::move(t)).first->second;
}

Tensor& ParameterStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
}

size_t ParameterStore::total_values() const {
    size_t n = 0;
    for (const auto& name : order_) n += at(name).numel();
    return n;
}

void ParameterStore::zero_all() {
    for (const auto& name : order_) at(name).fill(0.0);
}

// ---- checkpoint io ----

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
    uint64_t v = 0;
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("checkpoint truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw DataError("checkpoint truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    const uint64_t v = get_u64(is);
    double d = 0.0;
    std::memcpy(&d, &v, 8);
    return d;
}

constexpr const char* kMagic = "ENROLL-CKPT v1";

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os << kMagic << "\n";
    put_u64(os, params.size());
    for (const auto& name : params.names()) {
        const Tensor& t = params.at(name);
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.rank()));
        for (size_t d : t.shape) put_u64(os, d);
        for (double v : t.values) put_f64(os, v);
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, ParameterStore& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    std::string header;
    std::getline(is, header);
    if (header != kMagic) throw DataError("bad checkpoint header in " + path);
    const uint64_t count = get_u64(is);
    if (count != params.size()) {
        throw DataError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                        std::to_string(params.size()));
    }
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw DataError("checkpoint truncated");
        if (!params.has(name)) throw DataError("checkpoint tensor not in model: " + name);
        Tensor& dst = params.at(name);
        const uint32_t rank = get_u32(is);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = get_u64(is);
        if (shape != dst.shape) {
            throw DataError("shape mismatch for " + name + ": checkpoint " + shape_str(shape) +
                            " vs configured " + shape_str(dst.shape));
        }
        for (double& v : dst.values) v = get_f64(is);
    }
}

}  // namespace enroll
