#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bciwalk/telemetry.hpp"

namespace bciwalk {

/// TCP endpoint speaking the newline-delimited JSON protocol.
///
/// Every connected client gets its own bounded queue and writer thread;
/// when a client falls behind, its oldest queued lines are dropped, so
/// publish() never blocks on the network. Lines received from clients are
/// parsed as operator actions and handed out by poll_actions(); malformed
/// lines are counted and ignored.
class TelemetryServer final : public TelemetrySink, public ActionSource {
 public:
  /// Binds host:port (port 0 picks a free port) and starts accepting.
  TelemetryServer(const std::string& host, std::uint16_t port, std::size_t queue_capacity = 4096);
  ~TelemetryServer() override;

  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;

  std::uint16_t port() const { return port_; }

  void publish(const TelemetryMessage& msg) override;
  std::vector<OperatorAction> poll_actions() override;

  std::size_t client_count() const;
  /// Blocks until at least n clients are connected or the timeout passes.
  bool wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) const;
  /// Blocks until every client queue is empty or the timeout passes.
  bool flush(std::chrono::milliseconds timeout) const;

  std::size_t dropped_lines() const { return dropped_.load(); }
  std::size_t malformed_lines() const { return malformed_.load(); }

  void stop();

 private:
  struct Client;

  void accept_loop();
  void writer_loop(Client& c);
  void reader_loop(Client& c);
  void handle_line(const std::string& line);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::size_t capacity_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> dropped_{0};
  std::atomic<std::size_t> malformed_{0};

  mutable std::mutex clients_mutex_;
  mutable std::condition_variable clients_cv_;
  std::list<std::unique_ptr<Client>> clients_;

  std::mutex actions_mutex_;
  std::vector<OperatorAction> actions_;

  std::thread acceptor_;
};

}  // namespace bciwalk
