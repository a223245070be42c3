#ifndef COTSNET_TENSOR_HPP
#define COTSNET_TENSOR_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cots {

// Dense row-major float tensor. Network data is NCHW; scalars use shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, float fill);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(float v) { return Tensor({1}, v); }

    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> span() { return {data_.data(), data_.size()}; }
    std::span<const float> span() const { return {data_.data(), data_.size()}; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // NCHW element access
    float& at(int n, int c, int h, int w);
    float at(int n, int c, int h, int w) const;

    void fill(float v);
    void zero() { fill(0.0f); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    double sum() const;
    float min() const;
    float max() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

} // namespace cots

#endif
