#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace wr {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Incremental SHA-256 for digests over a growing file.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256& other);
    Sha256& operator=(const Sha256& other);
    Sha256(Sha256&&) noexcept;
    Sha256& operator=(Sha256&&) noexcept;

    void update(std::string_view data);

    /// Hex digest of everything fed so far; the object stays usable.
    std::string hex() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace wr
