#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "paq/error.hpp"

namespace paq {

// Little-endian encoder appending to an in-memory buffer.
class ByteWriter {
public:
    void bytes(std::string_view raw) { buf_.append(raw); }

    template <typename T>
    void put(T value) {
        static_assert(std::is_arithmetic_v<T>);
        using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
        U u;
        std::memcpy(&u, &value, sizeof(T));
        for (size_t i = 0; i < sizeof(T); ++i) {
            buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
        }
    }

    const std::string& buffer() const noexcept { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

// Bounds-checked little-endian decoder; running off the end is a truncation
// error.
class ByteReader {
public:
    ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    std::string_view bytes(size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    template <typename T>
    T get() {
        static_assert(std::is_arithmetic_v<T>);
        using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
        need(sizeof(T));
        U u = 0;
        for (size_t i = 0; i < sizeof(T); ++i) {
            u |= static_cast<U>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, &u, sizeof(T));
        return value;
    }

    size_t remaining() const noexcept { return data_.size() - pos_; }

    void need(size_t n) const {
        if (n > remaining()) {
            throw_domain(what_ + ": truncated payload", ErrorCode::truncated);
        }
    }

private:
    std::string_view data_;
    size_t pos_ = 0;
    std::string what_;
};

}  // namespace paq
