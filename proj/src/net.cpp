#include "wristrehab/net.hpp"

#include <algorithm>
#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "wristrehab/error.hpp"

namespace wr::net {

namespace {

[[noreturn]] void io_fail(const std::string& what) {
    throw Error(ErrorCode::Io, what + ": " + std::strerror(errno));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::string h = host.empty() || host == "localhost" ? "127.0.0.1" : host;
    if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw Error(ErrorCode::Io, "cannot resolve host '" + host + "'");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

}  // namespace

TcpStream::~TcpStream() { close(); }

TcpStream::TcpStream(TcpStream&& other) noexcept
    : fd_(other.fd_), buffer_(std::move(other.buffer_)), eof_(other.eof_) {
    other.fd_ = -1;
}

TcpStream& TcpStream::operator=(TcpStream&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        buffer_ = std::move(other.buffer_);
        eof_ = other.eof_;
        other.fd_ = -1;
    }
    return *this;
}

TcpStream TcpStream::connect(const std::string& host, std::uint16_t port) {
    const sockaddr_in addr = resolve(host, port);
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) io_fail("socket");
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        const int err = errno;
        ::close(fd);
        errno = err;
        io_fail("connect to " + host + ":" + std::to_string(port));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return TcpStream(fd);
}

bool TcpStream::fill(int timeout_ms) {
    if (timeout_ms >= 0) {
        pollfd p{fd_, POLLIN, 0};
        int rc;
        do rc = ::poll(&p, 1, timeout_ms);
        while (rc < 0 && errno == EINTR);
        if (rc < 0) throw Error(ErrorCode::BridgeDisconnected, std::string("poll: ") + std::strerror(errno));
        if (rc == 0) return false;
    }
    char chunk[8192];
    ssize_t n;
    do n = ::recv(fd_, chunk, sizeof chunk, 0);
    while (n < 0 && errno == EINTR);
    if (n < 0) throw Error(ErrorCode::BridgeDisconnected, std::string("recv: ") + std::strerror(errno));
    if (n == 0) eof_ = true;
    else buffer_.append(chunk, static_cast<std::size_t>(n));
    return true;
}

std::optional<std::string> TcpStream::take_line() {
    const auto nl = buffer_.find('\n');
    if (nl == std::string::npos) return std::nullopt;
    std::string line = buffer_.substr(0, nl);
    buffer_.erase(0, nl + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::optional<std::string> TcpStream::read_line() {
    if (fd_ < 0) throw Error(ErrorCode::BridgeDisconnected, "stream is closed");
    for (;;) {
        if (auto line = take_line()) return line;
        if (eof_) {
            if (!buffer_.empty()) throw Error(ErrorCode::BridgeDisconnected, "peer closed mid-line");
            return std::nullopt;
        }
        fill(-1);
    }
}

TcpStream::ReadStatus TcpStream::read_line_for(std::chrono::milliseconds timeout, std::string& line) {
    if (fd_ < 0) throw Error(ErrorCode::BridgeDisconnected, "stream is closed");
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto l = take_line()) {
            line = std::move(*l);
            return ReadStatus::Line;
        }
        if (eof_) {
            if (!buffer_.empty()) throw Error(ErrorCode::BridgeDisconnected, "peer closed mid-line");
            return ReadStatus::Closed;
        }
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        // A zero timeout still polls once.
        if (!fill(static_cast<int>(std::max<std::chrono::milliseconds::rep>(0, left.count())))) return ReadStatus::Timeout;
    }
}

void TcpStream::write_all(std::string_view data) {
    if (fd_ < 0) throw Error(ErrorCode::Io, "stream is closed");
    while (!data.empty()) {
        const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            io_fail("send");
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

void TcpStream::shutdown_write() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void TcpStream::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

TcpListener::~TcpListener() { close(); }

TcpListener::TcpListener(TcpListener&& other) noexcept : fd_(other.fd_), port_(other.port_) { other.fd_ = -1; }

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        port_ = other.port_;
        other.fd_ = -1;
    }
    return *this;
}

TcpListener TcpListener::bind(const std::string& host, std::uint16_t port) {
    sockaddr_in addr = resolve(host, port);
    TcpListener l;
    l.fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (l.fd_ < 0) io_fail("socket");
    const int one = 1;
    ::setsockopt(l.fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(l.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0)
        io_fail("bind " + host + ":" + std::to_string(port));
    if (::listen(l.fd_, 64) != 0) io_fail("listen");
    socklen_t len = sizeof addr;
    ::getsockname(l.fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    l.port_ = ntohs(addr.sin_port);
    return l;
}

std::optional<TcpStream> TcpListener::accept_for(std::chrono::milliseconds timeout) {
    if (fd_ < 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc <= 0 || fd_ < 0) return std::nullopt;
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return std::nullopt;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return TcpStream(fd);
}

void TcpListener::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

}  // namespace wr::net
