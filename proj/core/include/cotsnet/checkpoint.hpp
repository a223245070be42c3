#ifndef COTSNET_CHECKPOINT_HPP
#define COTSNET_CHECKPOINT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cots::checkpoint {

// Simple binary tensor archive: little-endian, name-keyed entries of f32
// tensors or f64 arrays. Writes are atomic (temp file + rename).
struct Entry {
    std::vector<int> shape;
    std::vector<float> f32;
    std::vector<double> f64;
    bool is_f64() const { return !f64.empty() || (f32.empty() && shape.empty()); }
};

class Archive {
public:
    void put_f32(const std::string& name, const std::vector<int>& shape,
                 const float* data, int64_t count);
    void put_f64(const std::string& name, const std::vector<double>& values);
    void put_scalar(const std::string& name, double value);

    bool contains(const std::string& name) const { return entries_.count(name) > 0; }
    const Entry& get(const std::string& name) const;
    double get_scalar(const std::string& name) const;
    const std::map<std::string, Entry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Archive load(const std::string& path);

private:
    std::map<std::string, Entry> entries_;
};

} // namespace cots::checkpoint

#endif
