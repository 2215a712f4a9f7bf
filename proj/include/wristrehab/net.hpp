#pragma once

// Minimal blocking TCP for newline-delimited JSON streams (device bridge and
// live session stream). POSIX sockets; IPv4.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace wr::net {

class TcpStream {
public:
    TcpStream() = default;
    explicit TcpStream(int fd) : fd_(fd) {}
    ~TcpStream();
    TcpStream(TcpStream&& other) noexcept;
    TcpStream& operator=(TcpStream&& other) noexcept;
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;

    /// Throws Error(Io) on failure.
    static TcpStream connect(const std::string& host, std::uint16_t port);

    bool is_open() const { return fd_ >= 0; }

    /// Next '\n'-terminated line without the terminator. Empty optional on a
    /// clean close at a line boundary; Error(BridgeDisconnected) when the
    /// peer vanishes mid-line or the socket fails.
    std::optional<std::string> read_line();

    /// Like read_line, but gives up after `timeout` and returns
    /// ReadStatus::Timeout, leaving any partial line buffered.
    enum class ReadStatus { Line, Closed, Timeout };
    ReadStatus read_line_for(std::chrono::milliseconds timeout, std::string& line);

    /// Throws Error(Io) if the peer is gone.
    void write_all(std::string_view data);

    void shutdown_write();
    void close();

private:
    bool fill(int timeout_ms);  // false on timeout
    std::optional<std::string> take_line();

    int fd_ = -1;
    std::string buffer_;
    bool eof_ = false;
};

class TcpListener {
public:
    TcpListener() = default;
    ~TcpListener();
    TcpListener(TcpListener&& other) noexcept;
    TcpListener& operator=(TcpListener&& other) noexcept;
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    /// Port 0 picks a free port.
    static TcpListener bind(const std::string& host, std::uint16_t port);

    std::uint16_t port() const { return port_; }

    /// Waits up to `timeout`; empty on timeout or after close().
    std::optional<TcpStream> accept_for(std::chrono::milliseconds timeout);

    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

}  // namespace wr::net
