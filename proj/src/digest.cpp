#include "wristrehab/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace wr {

namespace {

struct CtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using CtxPtr = std::unique_ptr<EVP_MD_CTX, CtxDeleter>;

CtxPtr fresh_context() {
    CtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: context init failed");
    return ctx;
}

std::string finish_copy(const EVP_MD_CTX* ctx) {
    CtxPtr copy(EVP_MD_CTX_new());
    if (!copy || EVP_MD_CTX_copy_ex(copy.get(), ctx) != 1) throw std::runtime_error("sha256: copy failed");
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(copy.get(), md.data(), &len) != 1) throw std::runtime_error("sha256: final failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xF]);
    }
    return out;
}

}  // namespace

struct Sha256::Impl {
    CtxPtr ctx = fresh_context();
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {}
Sha256::~Sha256() = default;
Sha256::Sha256(Sha256&&) noexcept = default;
Sha256& Sha256::operator=(Sha256&&) noexcept = default;

Sha256::Sha256(const Sha256& other) : impl_(std::make_unique<Impl>()) {
    if (EVP_MD_CTX_copy_ex(impl_->ctx.get(), other.impl_->ctx.get()) != 1)
        throw std::runtime_error("sha256: copy failed");
}

Sha256& Sha256::operator=(const Sha256& other) {
    if (this != &other) *this = Sha256(other);
    return *this;
}

void Sha256::update(std::string_view data) {
    if (EVP_DigestUpdate(impl_->ctx.get(), data.data(), data.size()) != 1)
        throw std::runtime_error("sha256: update failed");
}

std::string Sha256::hex() const { return finish_copy(impl_->ctx.get()); }

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data);
    return h.hex();
}

}  // namespace wr
