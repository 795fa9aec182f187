#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace dppp {

// Base class for every error thrown by the library. Subsystems derive
// named error types from this so callers can catch narrowly.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericsError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class EnumError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// FNV-1a, used for parameter-group checksums and file integrity tags.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Atomic file write: write to a sibling temp file, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

} // namespace dppp
