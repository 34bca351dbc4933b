#include "bciwalk/telemetry_server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include "bciwalk/error.hpp"

namespace bciwalk {

struct TelemetryServer::Client {
  int fd = -1;
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::string> queue;
  bool closed = false;
  bool writing = false;
  std::thread writer;
  std::thread reader;
};

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw std::runtime_error(what + ": " + std::strerror(errno));
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

TelemetryServer::TelemetryServer(const std::string& host, std::uint16_t port, std::size_t queue_capacity)
    : capacity_(queue_capacity) {
  if (capacity_ == 0) throw InvalidInput("telemetry queue capacity must be positive");
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw InvalidInput("cannot resolve telemetry host '" + host + "': " + ::gai_strerror(rc));
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    sys_fail("socket");
  }
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) < 0) {
    const int err = errno;
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    errno = err;
    sys_fail("cannot bind telemetry endpoint " + host + ":" + service);
  }
  ::freeaddrinfo(res);
  if (::listen(listen_fd_, 8) < 0) {
    ::close(listen_fd_);
    sys_fail("listen");
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TelemetryServer::~TelemetryServer() { stop(); }

void TelemetryServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  std::list<std::unique_ptr<Client>> clients;
  {
    std::lock_guard lock(clients_mutex_);
    clients.swap(clients_);
  }
  for (auto& c : clients) {
    {
      std::lock_guard lock(c->mutex);
      c->closed = true;
    }
    c->cv.notify_all();
    ::shutdown(c->fd, SHUT_RDWR);
    if (c->writer.joinable()) c->writer.join();
    if (c->reader.joinable()) c->reader.join();
    ::close(c->fd);
  }
  clients_cv_.notify_all();
}

void TelemetryServer::accept_loop() {
  while (!stopping_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 50);
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto client = std::make_unique<Client>();
    client->fd = fd;
    Client& ref = *client;
    {
      std::lock_guard lock(clients_mutex_);
      clients_.push_back(std::move(client));
    }
    ref.writer = std::thread([this, &ref] { writer_loop(ref); });
    ref.reader = std::thread([this, &ref] { reader_loop(ref); });
    clients_cv_.notify_all();
  }
}

void TelemetryServer::writer_loop(Client& c) {
  std::unique_lock lock(c.mutex);
  while (true) {
    c.cv.wait(lock, [&] { return c.closed || !c.queue.empty(); });
    if (c.closed) break;
    std::string line = std::move(c.queue.front());
    c.queue.pop_front();
    c.writing = true;
    lock.unlock();
    const bool ok = send_all(c.fd, line);
    lock.lock();
    c.writing = false;
    c.cv.notify_all();
    if (!ok) {
      c.closed = true;
      break;
    }
  }
  c.queue.clear();
  c.cv.notify_all();
  clients_cv_.notify_all();
}

void TelemetryServer::reader_loop(Client& c) {
  std::string pending;
  char buf[4096];
  while (true) {
    const auto n = ::recv(c.fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    pending.append(buf, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = pending.find('\n')) != std::string::npos) {
      std::string line = pending.substr(0, nl);
      pending.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) handle_line(line);
    }
    if (pending.size() > (1u << 20)) {  // no newline in 1 MiB: not our protocol
      ++malformed_;
      pending.clear();
    }
  }
  {
    std::lock_guard lock(c.mutex);
    c.closed = true;
  }
  c.cv.notify_all();
  clients_cv_.notify_all();
}

void TelemetryServer::handle_line(const std::string& line) {
  try {
    const auto msg = TelemetryMessage::parse(line);
    if (auto action = parse_action(msg)) {
      std::lock_guard lock(actions_mutex_);
      actions_.push_back(*action);
    }
  } catch (const FormatError&) {
    ++malformed_;
  }
}

void TelemetryServer::publish(const TelemetryMessage& msg) {
  std::string line = msg.to_line();
  line += '\n';
  std::lock_guard lock(clients_mutex_);
  for (auto& c : clients_) {
    std::lock_guard cl(c->mutex);
    if (c->closed) continue;
    if (c->queue.size() >= capacity_) {
      c->queue.pop_front();
      ++dropped_;
    }
    c->queue.push_back(line);
    c->cv.notify_one();
  }
}

std::vector<OperatorAction> TelemetryServer::poll_actions() {
  std::lock_guard lock(actions_mutex_);
  std::vector<OperatorAction> out;
  out.swap(actions_);
  return out;
}

std::size_t TelemetryServer::client_count() const {
  std::lock_guard lock(clients_mutex_);
  std::size_t n = 0;
  for (const auto& c : clients_) {
    std::lock_guard cl(c->mutex);
    if (!c->closed) ++n;
  }
  return n;
}

bool TelemetryServer::wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (client_count() < n) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::unique_lock lock(clients_mutex_);
    clients_cv_.wait_for(lock, std::chrono::milliseconds(10));
  }
  return true;
}

bool TelemetryServer::flush(std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    bool idle = true;
    {
      std::lock_guard lock(clients_mutex_);
      for (const auto& c : clients_) {
        std::lock_guard cl(c->mutex);
        if (!c->closed && (!c->queue.empty() || c->writing)) idle = false;
      }
    }
    if (idle) return true;
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

}  // namespace bciwalk
