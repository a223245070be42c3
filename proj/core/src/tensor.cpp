#include "cotsnet/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace cots {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative tensor dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

float& Tensor::at(int n, int c, int h, int w) {
    const int C = shape_[1], H = shape_[2], W = shape_[3];
    return data_[static_cast<size_t>(((static_cast<int64_t>(n) * C + c) * H + h) * W + w)];
}

float Tensor::at(int n, int c, int h, int w) const {
    const int C = shape_[1], H = shape_[2], W = shape_[3];
    return data_[static_cast<size_t>(((static_cast<int64_t>(n) * C + c) * H + h) * W + w)];
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::sum() const {
    double s = 0.0;
    for (float v : data_) s += v;
    return s;
}

float Tensor::min() const {
    return data_.empty() ? 0.0f : *std::min_element(data_.begin(), data_.end());
}

float Tensor::max() const {
    return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end());
}

std::string Tensor::shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + ")";
}

} // namespace cots
