#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dppp/nn/graph.hpp"

namespace dppp::nn {

class ChecksumError : public Error {
public:
    using Error::Error;
};

// Flat binary container of named matrices plus named string blobs, with a
// trailing FNV-1a checksum. Order is preserved; lookups are by exact name.
class TensorArchive {
public:
    void put(const std::string& name, const Mat& m);
    void put_string(const std::string& name, const std::string& s);

    bool has(const std::string& name) const;
    const Mat& get(const std::string& name) const;
    bool has_string(const std::string& name) const;
    const std::string& get_string(const std::string& name) const;

    const std::vector<std::pair<std::string, Mat>>& tensors() const { return tensors_; }

    std::string serialize() const;
    static TensorArchive deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path) const; // atomic write
    static TensorArchive load(const std::filesystem::path& path);

private:
    std::vector<std::pair<std::string, Mat>> tensors_;
    std::vector<std::pair<std::string, std::string>> strings_;
};

} // namespace dppp::nn
