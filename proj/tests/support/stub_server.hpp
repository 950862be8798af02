#pragma once

// Localhost chat-completion server for transport tests. Counts requests and
// the peak number of requests in flight.

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "remedy/gateway.hpp"

namespace remedy::testing {

struct StubReply {
  int status = 200;
  std::string body;
};

class StubServer {
 public:
  // `handler` receives the request body and the 1-based request number.
  using Handler = std::function<StubReply(const std::string& body, int request_number)>;

  explicit StubServer(Handler handler, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : handler_(std::move(handler)), delay_(delay) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int peak = peak_.load();
      while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
      }
      const int n = ++requests_;
      {
        std::lock_guard<std::mutex> lock(mu_);
        bodies_.push_back(req.body);
        auth_headers_.push_back(req.get_header_value("Authorization"));
      }
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      const StubReply reply = handler_(req.body, n);
      --in_flight_;
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int requests() const { return requests_.load(); }
  int peak_in_flight() const { return peak_.load(); }
  std::vector<std::string> bodies() const {
    std::lock_guard<std::mutex> lock(mu_);
    return bodies_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard<std::mutex> lock(mu_);
    return auth_headers_;
  }

  static StubReply completion(const std::string& content) {
    return StubReply{200, gateway::completion_body(content)};
  }

 private:
  Handler handler_;
  std::chrono::milliseconds delay_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> requests_{0};
  mutable std::mutex mu_;
  std::vector<std::string> bodies_;
  std::vector<std::string> auth_headers_;
};

}  // namespace remedy::testing
