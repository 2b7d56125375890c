#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

// Little-endian binary file helpers shared by the dataset and checkpoint
// formats. `context` prefixes every error message so callers read naturally
// ("read_dataset: truncated file ...").
namespace fq::io {

class Writer {
public:
    Writer(const std::string& path, std::string context)
        : out_(path, std::ios::binary), path_(path), context_(std::move(context)) {
        if (!out_) throw std::runtime_error(context_ + ": cannot open " + path_);
    }
    void bytes(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), std::streamsize(n));
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void f32(double v) {
        const float f = float(v);
        bytes(&f, 4);
    }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        bytes(s.data(), s.size());
    }
    void close() {
        out_.flush();
        if (!out_) throw std::runtime_error(context_ + ": write failed for " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
    std::string context_;
};

class Reader {
public:
    Reader(const std::string& path, std::string context) : context_(std::move(context)) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error(context_ + ": cannot open " + path);
        buf_.assign(std::istreambuf_iterator<char>(in),
                    std::istreambuf_iterator<char>());
    }
    void need(size_t n, const char* what) {
        if (pos_ + n > buf_.size()) {
            throw std::runtime_error(
                context_ + ": truncated file, needed " + std::to_string(n) +
                " bytes for " + what + " at byte offset " + std::to_string(pos_));
        }
    }
    void bytes(void* p, size_t n, const char* what) {
        need(n, what);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    uint32_t u32(const char* what) {
        uint32_t v;
        bytes(&v, 4, what);
        return v;
    }
    uint64_t u64(const char* what) {
        uint64_t v;
        bytes(&v, 8, what);
        return v;
    }
    double f32(const char* what) {
        float f;
        bytes(&f, 4, what);
        return double(f);
    }
    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    size_t pos() const { return pos_; }
    size_t size() const { return buf_.size(); }
    void expect_end() {
        if (pos_ != buf_.size()) {
            throw std::runtime_error(context_ + ": trailing bytes at byte offset " +
                                     std::to_string(pos_));
        }
    }

private:
    std::vector<char> buf_;
    size_t pos_ = 0;
    std::string context_;
};

}  // namespace fq::io
