#ifndef HYPERSAC_CHECKPOINT_HPP_
#define HYPERSAC_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hypersac/common.hpp"
#include "hypersac/tensor.hpp"

namespace hypersac {

// Self-describing checkpoint container: a magic string and version, text
// blobs (config, RNG states), and named float64 arrays with shapes. All
// integers and payloads are little-endian.
class CheckpointContainer {
public:
    static constexpr char kMagic[9] = "HSACCKP1";

    void put_blob(const std::string& name, std::string data) { blobs_[name] = std::move(data); }

    void put_array(const std::string& name, Shape shape, std::vector<double> data) {
        if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
            throw UsageError("CheckpointContainer::put_array: shape/data mismatch for '" + name + "'");
        arrays_[name] = {std::move(shape), std::move(data)};
    }

    void put_scalar(const std::string& name, double v) { put_array(name, {1}, {v}); }

    bool has_blob(const std::string& name) const { return blobs_.count(name) > 0; }
    bool has_array(const std::string& name) const { return arrays_.count(name) > 0; }

    const std::string& blob(const std::string& name) const {
        auto it = blobs_.find(name);
        if (it == blobs_.end()) throw UsageError("checkpoint: missing blob '" + name + "'");
        return it->second;
    }

    const std::vector<double>& array(const std::string& name) const {
        auto it = arrays_.find(name);
        if (it == arrays_.end()) throw UsageError("checkpoint: missing array '" + name + "'");
        return it->second.second;
    }

    const Shape& array_shape(const std::string& name) const {
        auto it = arrays_.find(name);
        if (it == arrays_.end()) throw UsageError("checkpoint: missing array '" + name + "'");
        return it->second.first;
    }

    double scalar(const std::string& name) const {
        const auto& a = array(name);
        if (a.size() != 1) throw UsageError("checkpoint: '" + name + "' is not a scalar");
        return a[0];
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw UsageError("checkpoint: cannot write '" + path + "'");
        out.write(kMagic, 8);
        write_u32(out, 1);  // version
        write_u32(out, static_cast<std::uint32_t>(blobs_.size()));
        for (const auto& [name, data] : blobs_) {
            write_string(out, name);
            write_u64(out, data.size());
            out.write(data.data(), static_cast<std::streamsize>(data.size()));
        }
        write_u32(out, static_cast<std::uint32_t>(arrays_.size()));
        for (const auto& [name, sv] : arrays_) {
            write_string(out, name);
            write_u32(out, static_cast<std::uint32_t>(sv.first.size()));
            for (auto d : sv.first) write_u64(out, static_cast<std::uint64_t>(d));
            for (double v : sv.second) write_f64(out, v);
        }
        if (!out) throw UsageError("checkpoint: write failed for '" + path + "'");
    }

    static CheckpointContainer load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw UsageError("checkpoint: cannot open '" + path + "'");
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kMagic, 8) != 0)
            throw UsageError("checkpoint: bad magic in '" + path + "'");
        const std::uint32_t version = read_u32(in);
        if (version != 1) throw UsageError("checkpoint: unsupported version " + std::to_string(version));
        CheckpointContainer c;
        const std::uint32_t n_blobs = read_u32(in);
        for (std::uint32_t i = 0; i < n_blobs; ++i) {
            std::string name = read_string(in);
            const std::uint64_t len = read_u64(in);
            std::string data(len, '\0');
            in.read(data.data(), static_cast<std::streamsize>(len));
            c.blobs_[name] = std::move(data);
        }
        const std::uint32_t n_arrays = read_u32(in);
        for (std::uint32_t i = 0; i < n_arrays; ++i) {
            std::string name = read_string(in);
            const std::uint32_t ndim = read_u32(in);
            Shape shape(ndim);
            for (auto& d : shape) d = static_cast<std::int64_t>(read_u64(in));
            std::vector<double> data(static_cast<std::size_t>(numel_of(shape)));
            for (auto& v : data) v = read_f64(in);
            c.arrays_[name] = {std::move(shape), std::move(data)};
        }
        if (!in) throw UsageError("checkpoint: truncated file '" + path + "'");
        return c;
    }

    const std::map<std::string, std::pair<Shape, std::vector<double>>>& arrays() const { return arrays_; }

private:
    static void write_u32(std::ostream& out, std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(b, 4);
    }
    static void write_u64(std::ostream& out, std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(b, 8);
    }
    static void write_f64(std::ostream& out, double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_u64(out, bits);
    }
    static void write_string(std::ostream& out, const std::string& s) {
        write_u32(out, static_cast<std::uint32_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static std::uint32_t read_u32(std::istream& in) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    static std::uint64_t read_u64(std::istream& in) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    static double read_f64(std::istream& in) {
        const std::uint64_t bits = read_u64(in);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    static std::string read_string(std::istream& in) {
        const std::uint32_t len = read_u32(in);
        std::string s(len, '\0');
        in.read(s.data(), static_cast<std::streamsize>(len));
        return s;
    }

    std::map<std::string, std::string> blobs_;
    std::map<std::string, std::pair<Shape, std::vector<double>>> arrays_;
};

}  // namespace hypersac

#endif  // HYPERSAC_CHECKPOINT_HPP_
