#include "dppp/nn/serialize.hpp"

#include <cstring>

namespace dppp::nn {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'P', 'P', 'A', 'R', 'C', '1'};

void put_u64(std::string& buf, std::uint64_t v) {
    char raw[8];
    std::memcpy(raw, &v, 8);
    buf.append(raw, 8);
}

void put_bytes(std::string& buf, const void* data, std::size_t n) {
    buf.append(static_cast<const char*>(data), n);
}

struct Cursor {
    const std::string* buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf->size()) {
            throw ChecksumError("archive truncated");
        }
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf->data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf->substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

void TensorArchive::put(const std::string& name, const Mat& m) {
    tensors_.emplace_back(name, m);
}

void TensorArchive::put_string(const std::string& name, const std::string& s) {
    strings_.emplace_back(name, s);
}

bool TensorArchive::has(const std::string& name) const {
    for (const auto& [n, m] : tensors_) {
        if (n == name) return true;
    }
    return false;
}

const Mat& TensorArchive::get(const std::string& name) const {
    for (const auto& [n, m] : tensors_) {
        if (n == name) return m;
    }
    throw Error("archive missing tensor: " + name);
}

bool TensorArchive::has_string(const std::string& name) const {
    for (const auto& [n, s] : strings_) {
        if (n == name) return true;
    }
    return false;
}

const std::string& TensorArchive::get_string(const std::string& name) const {
    for (const auto& [n, s] : strings_) {
        if (n == name) return s;
    }
    throw Error("archive missing string: " + name);
}

std::string TensorArchive::serialize() const {
    std::string buf;
    put_bytes(buf, kMagic, 8);
    put_u64(buf, tensors_.size());
    for (const auto& [name, m] : tensors_) {
        put_u64(buf, name.size());
        put_bytes(buf, name.data(), name.size());
        put_u64(buf, static_cast<std::uint64_t>(m.rows()));
        put_u64(buf, static_cast<std::uint64_t>(m.cols()));
        put_bytes(buf, m.data(), sizeof(double) * m.size());
    }
    put_u64(buf, strings_.size());
    for (const auto& [name, s] : strings_) {
        put_u64(buf, name.size());
        put_bytes(buf, name.data(), name.size());
        put_u64(buf, s.size());
        put_bytes(buf, s.data(), s.size());
    }
    put_u64(buf, fnv1a64(buf.data(), buf.size()));
    return buf;
}

TensorArchive TensorArchive::deserialize(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
        throw ChecksumError("not an archive (bad magic or too short)");
    }
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    const std::uint64_t actual = fnv1a64(bytes.data(), bytes.size() - 8);
    if (stored != actual) {
        throw ChecksumError("archive checksum mismatch");
    }

    TensorArchive ar;
    Cursor cur{&bytes, 8};
    const std::uint64_t ntensors = cur.u64();
    for (std::uint64_t i = 0; i < ntensors; ++i) {
        const std::string name = cur.bytes(cur.u64());
        const auto rows = static_cast<Eigen::Index>(cur.u64());
        const auto cols = static_cast<Eigen::Index>(cur.u64());
        Mat m(rows, cols);
        const std::size_t nbytes = sizeof(double) * static_cast<std::size_t>(m.size());
        cur.need(nbytes);
        std::memcpy(m.data(), bytes.data() + cur.pos, nbytes);
        cur.pos += nbytes;
        ar.tensors_.emplace_back(name, std::move(m));
    }
    const std::uint64_t nstrings = cur.u64();
    for (std::uint64_t i = 0; i < nstrings; ++i) {
        const std::string name = cur.bytes(cur.u64());
        const std::string val = cur.bytes(cur.u64());
        ar.strings_.emplace_back(name, val);
    }
    return ar;
}

void TensorArchive::save(const std::filesystem::path& path) const {
    write_file_atomic(path, serialize());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
    return deserialize(read_text_file(path));
}

} // namespace dppp::nn
