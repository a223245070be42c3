#include "cotsnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>

namespace cots::checkpoint {

namespace {
constexpr char kMagic[8] = {'C', 'O', 'T', 'S', 'C', 'K', 'P', '1'};

void write_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }
uint32_t read_u32(std::FILE* f, const std::string& path) {
    uint32_t v = 0;
    if (std::fread(&v, sizeof(v), 1, f) != 1)
        throw std::runtime_error("checkpoint: truncated file: " + path);
    return v;
}
} // namespace

void Archive::put_f32(const std::string& name, const std::vector<int>& shape,
                      const float* data, int64_t count) {
    Entry e;
    e.shape = shape;
    e.f32.assign(data, data + count);
    entries_[name] = std::move(e);
}

void Archive::put_f64(const std::string& name, const std::vector<double>& values) {
    Entry e;
    e.shape = {static_cast<int>(values.size())};
    e.f64 = values;
    entries_[name] = std::move(e);
}

void Archive::put_scalar(const std::string& name, double value) {
    put_f64(name, {value});
}

const Entry& Archive::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::runtime_error("checkpoint: missing entry: " + name);
    return it->second;
}

double Archive::get_scalar(const std::string& name) const {
    const Entry& e = get(name);
    if (e.f64.size() != 1) throw std::runtime_error("checkpoint: not a scalar: " + name);
    return e.f64[0];
}

void Archive::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + tmp);
    std::fwrite(kMagic, 1, 8, f);
    write_u32(f, static_cast<uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
        write_u32(f, static_cast<uint32_t>(name.size()));
        std::fwrite(name.data(), 1, name.size(), f);
        const uint8_t dtype = e.f64.empty() ? 0 : 1;
        std::fwrite(&dtype, 1, 1, f);
        write_u32(f, static_cast<uint32_t>(e.shape.size()));
        for (int d : e.shape) write_u32(f, static_cast<uint32_t>(d));
        if (dtype == 0) {
            write_u32(f, static_cast<uint32_t>(e.f32.size()));
            std::fwrite(e.f32.data(), sizeof(float), e.f32.size(), f);
        } else {
            write_u32(f, static_cast<uint32_t>(e.f64.size()));
            std::fwrite(e.f64.data(), sizeof(double), e.f64.size(), f);
        }
    }
    if (std::fclose(f) != 0) throw std::runtime_error("checkpoint: write failed: " + tmp);
    std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    struct Closer {
        std::FILE* f;
        ~Closer() { std::fclose(f); }
    } closer{f};

    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic (not a checkpoint file): " + path);

    Archive a;
    const uint32_t count = read_u32(f, path);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_u32(f, path);
        std::string name(name_len, '\0');
        if (std::fread(name.data(), 1, name_len, f) != name_len)
            throw std::runtime_error("checkpoint: truncated file: " + path);
        uint8_t dtype = 0;
        if (std::fread(&dtype, 1, 1, f) != 1)
            throw std::runtime_error("checkpoint: truncated file: " + path);
        Entry e;
        const uint32_t ndim = read_u32(f, path);
        for (uint32_t d = 0; d < ndim; ++d)
            e.shape.push_back(static_cast<int>(read_u32(f, path)));
        const uint32_t n = read_u32(f, path);
        if (dtype == 0) {
            e.f32.resize(n);
            if (std::fread(e.f32.data(), sizeof(float), n, f) != n)
                throw std::runtime_error("checkpoint: truncated file: " + path);
        } else {
            e.f64.resize(n);
            if (std::fread(e.f64.data(), sizeof(double), n, f) != n)
                throw std::runtime_error("checkpoint: truncated file: " + path);
        }
        a.entries_[name] = std::move(e);
    }
    return a;
}

} // namespace cots::checkpoint
