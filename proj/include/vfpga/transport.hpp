// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cerrno>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include "vfpga/service.hpp"
#include "vfpga/wire.hpp"

namespace vfpga
{

/// Carries one encoded request frame to the broker and returns the encoded
/// response frame.
class Transport
{
public:
  virtual ~Transport() = default;
  virtual Bytes roundtrip(ByteView request) = 0;
};

/// Same bytes, no socket. Used by tests and the default bench mode.
class InProcessTransport final : public Transport
{
public:
  explicit InProcessTransport(VmmService& service)
    : service_(service)
  { }

  Bytes roundtrip(ByteView request) override
  { return service_.handle_bytes(request); }

private:
  VmmService& service_;
};

namespace detail
{

inline void write_all(int fd, ByteView data)
{
  std::size_t done = 0;
  while (done < data.size())
    {
      auto n = ::send(fd, data.data() + done, data.size() - done, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR)
        continue;
      if (n <= 0)
        throw Error(Errc::IoError, std::string("send: ") + std::strerror(errno));
      done += static_cast<std::size_t>(n);
    }
}

/// False on clean EOF before the first byte.
inline bool read_exact(int fd, std::uint8_t* out, std::size_t len)
{
  std::size_t done = 0;
  while (done < len)
    {
      auto n = ::recv(fd, out + done, len - done, 0);
      if (n < 0 && errno == EINTR)
        continue;
      if (n == 0 && done == 0)
        return false;
      if (n <= 0)
        throw Error(Errc::IoError, "connection closed mid-frame");
      done += static_cast<std::size_t>(n);
    }
  return true;
}

/// One whole frame (length prefix included), or nullopt on EOF.
inline std::optional<Bytes> read_frame(int fd)
{
  Bytes buf(4);
  if (!read_exact(fd, buf.data(), 4))
    return std::nullopt;
  auto len = wire::frame_body_length(buf);
  buf.resize(4 + std::size_t(len));
  if (!read_exact(fd, buf.data() + 4, len))
    throw Error(Errc::IoError, "connection closed mid-frame");
  return buf;
}

inline sockaddr_un unix_address(const std::string& path)
{
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path))
    throw Error(Errc::IoError, "socket path too long: " + path);
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

} // namespace detail

/// Client end of a local stream socket. One request in flight at a time.
class SocketTransport final : public Transport
{
public:
  explicit SocketTransport(const std::string& path)
  {
    fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd_ < 0)
      throw Error(Errc::IoError, std::string("socket: ") + std::strerror(errno));
    auto addr = detail::unix_address(path);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      {
        auto err = errno;
        ::close(fd_);
        throw Error(Errc::IoError, "connect " + path + ": " + std::strerror(err));
      }
  }

  ~SocketTransport() override
  {
    if (fd_ >= 0)
      ::close(fd_);
  }

  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  Bytes roundtrip(ByteView request) override
  {
    std::lock_guard lock(mu_);
    detail::write_all(fd_, request);
    auto resp = detail::read_frame(fd_);
    if (!resp)
      throw Error(Errc::IoError, "server closed the connection");
    return std::move(*resp);
  }

private:
  int fd_ = -1;
  std::mutex mu_;
};

/// Serves a VmmService on a Unix-domain socket, one thread per connection.
/// Requests from all connections are serialized by the service.
class VmmServer
{
public:
  VmmServer(VmmService& service, std::string path)
    : service_(service), path_(std::move(path))
  {
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (listen_fd_ < 0)
      throw Error(Errc::IoError, std::string("socket: ") + std::strerror(errno));
    ::unlink(path_.c_str());
    auto addr = detail::unix_address(path_);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0
        || ::listen(listen_fd_, 16) != 0)
      {
        auto err = errno;
        ::close(listen_fd_);
        throw Error(Errc::IoError, "listen on " + path_ + ": " + std::strerror(err));
      }
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~VmmServer()
  { stop(); }

  VmmServer(const VmmServer&) = delete;
  VmmServer& operator=(const VmmServer&) = delete;

  const std::string& path() const
  { return path_; }

  void stop()
  {
    if (stopping_.exchange(true))
      return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable())
      acceptor_.join();
    ::close(listen_fd_);
    {
      std::lock_guard lock(mu_);
      for (int fd : connections_)
        ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : workers_)
      if (t.joinable())
        t.join();
    ::unlink(path_.c_str());
  }

  /// Blocks until stop() is called from elsewhere.
  void wait()
  {
    if (acceptor_.joinable())
      acceptor_.join();
  }

private:
  void accept_loop()
  {
    while (!stopping_)
      {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0)
          {
            if (errno == EINTR)
              continue;
            return;
          }
        std::lock_guard lock(mu_);
        connections_.push_back(fd);
        workers_.emplace_back([this, fd] { serve(fd); });
      }
  }

  void serve(int fd)
  {
    try
      {
        while (auto frame = detail::read_frame(fd))
          detail::write_all(fd, service_.handle_bytes(*frame));
      }
    catch (const Error&)
      {
        // Peer went away or sent garbage framing; drop the connection.
      }
    std::lock_guard lock(mu_);
    std::erase(connections_, fd);
    ::close(fd);
  }

  VmmService& service_;
  std::string path_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<int> connections_;
  std::vector<std::thread> workers_;
};

} // namespace vfpga
