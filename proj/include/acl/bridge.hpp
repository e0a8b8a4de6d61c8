#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "acl/demonstrator.hpp"
#include "acl/env.hpp"
#include "acl/json.hpp"

namespace acl {

inline constexpr int kProtocolVersion = 1;

struct BridgeConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  /// Environment tick; 0 runs in lockstep (each frame waits for its action).
  double tick_hz = 20.0;
  std::chrono::milliseconds connect_timeout{std::chrono::minutes(30)};
  /// Longest silence from the client before the query is abandoned.
  std::chrono::milliseconds idle_timeout{std::chrono::minutes(5)};
};

/// WebSocket endpoint for one UI session. Messages are newline-terminated JSON
/// objects, one per WebSocket text message. Network I/O runs on an internal thread;
/// callers exchange messages through `send` and `receive`.
class BridgeServer {
 public:
  explicit BridgeServer(BridgeConfig config)
      : config_(std::move(config)), acceptor_(io_), work_(boost::asio::make_work_guard(io_)) {
    namespace ip = boost::asio::ip;
    const ip::tcp::endpoint ep(ip::make_address(config_.address), config_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(boost::asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    accept();
    thread_ = std::thread([this] { io_.run(); });
  }

  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  ~BridgeServer() {
    boost::asio::post(io_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      if (ws_) ws_->next_layer().close(ec);
    });
    work_.reset();
    io_.stop();
    if (thread_.joinable()) thread_.join();
  }

  unsigned short port() const { return port_; }
  const BridgeConfig& config() const { return config_; }

  bool wait_connected(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [this] { return connected_; });
  }

  bool connected() const {
    std::lock_guard lock(mu_);
    return connected_;
  }

  /// Hook run on the I/O thread right after a client completes the handshake.
  void on_connect(std::function<void()> f) { on_connect_ = std::move(f); }

  void send(const json& msg) {
    auto line = std::make_shared<std::string>(msg.dump() + "\n");
    boost::asio::post(io_, [this, line] {
      if (!ws_) return;
      outbox_.push_back(line);
      if (outbox_.size() == 1) write_next();
    });
  }

  /// Next message from the client, or nullopt on timeout. Throws DemonstrationError
  /// once the client has disconnected and no messages remain.
  std::optional<json> receive(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    const std::uint64_t session = session_;
    cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || !connected_ || session_ != session; });
    if (!inbox_.empty()) {
      json m = std::move(inbox_.front());
      inbox_.pop_front();
      return m;
    }
    if (!connected_) throw DemonstrationError("human demonstrator disconnected");
    return std::nullopt;
  }

  void clear_inbox() {
    std::lock_guard lock(mu_);
    inbox_.clear();
  }

 private:
  using Socket = boost::asio::ip::tcp::socket;
  using WebSocket = boost::beast::websocket::stream<Socket>;

  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, Socket socket) {
      if (ec) return;
      if (ws_) {
        // One session at a time.
        boost::system::error_code ignore;
        socket.close(ignore);
        accept();
        return;
      }
      ws_ = std::make_unique<WebSocket>(std::move(socket));
      ws_->text(true);
      ws_->async_accept([this](boost::system::error_code ec2) {
        if (ec2) {
          ws_.reset();
          accept();
          return;
        }
        // Queue the greeting before any waiting sender can see the session.
        if (on_connect_) on_connect_();
        {
          std::lock_guard lock(mu_);
          connected_ = true;
          ++session_;
          inbox_.clear();
        }
        cv_.notify_all();
        read();
        accept();
      });
    });
  }

  void read() {
    ws_->async_read(buffer_, [this](boost::system::error_code ec, std::size_t) {
      if (ec) {
        disconnect();
        return;
      }
      const std::string data = boost::beast::buffers_to_string(buffer_.data());
      buffer_.consume(buffer_.size());
      std::vector<json> msgs;
      std::size_t pos = 0;
      while (pos < data.size()) {
        std::size_t end = data.find('\n', pos);
        if (end == std::string::npos) end = data.size();
        const std::string line = data.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        try {
          msgs.push_back(json::parse(line));
        } catch (const json::exception& e) {
          spdlog::warn("bridge: dropping malformed message: {}", e.what());
        }
      }
      {
        std::lock_guard lock(mu_);
        for (auto& m : msgs) inbox_.push_back(std::move(m));
      }
      cv_.notify_all();
      read();
    });
  }

  void write_next() {
    ws_->async_write(boost::asio::buffer(*outbox_.front()), [this](boost::system::error_code ec, std::size_t) {
      if (ec) {
        disconnect();
        return;
      }
      outbox_.pop_front();
      if (!outbox_.empty()) write_next();
    });
  }

  void disconnect() {
    if (!ws_) return;
    boost::system::error_code ignore;
    ws_->next_layer().close(ignore);
    ws_.reset();
    outbox_.clear();
    {
      std::lock_guard lock(mu_);
      connected_ = false;
    }
    cv_.notify_all();
  }

  BridgeConfig config_;
  boost::asio::io_context io_;
  boost::asio::ip::tcp::acceptor acceptor_;
  boost::asio::executor_work_guard<boost::asio::io_context::executor_type> work_;
  std::thread thread_;
  unsigned short port_ = 0;
  std::unique_ptr<WebSocket> ws_;
  boost::beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<std::string>> outbox_;
  std::function<void()> on_connect_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<json> inbox_;
  bool connected_ = false;
  std::uint64_t session_ = 0;
};

/// Human demonstrations over the bridge. The environment is stepped here, never in
/// the client, so recorded transitions come from the same physics as training.
class RemoteDemonstrator final : public Demonstrator {
 public:
  RemoteDemonstrator(TaskSpec spec, BridgeServer& bridge) : env_(std::move(spec)), bridge_(bridge) {
    bridge_.on_connect([this] { bridge_.send(hello()); });
  }

  json hello() const {
    return {{"type", "hello"},
            {"version", kProtocolVersion},
            {"task", to_json(env_.spec())},
            {"tick_hz", bridge_.config().tick_hz}};
  }

  /// Runs attempts from `start` until the human reaches the goal.
  Demonstration demonstrate(const EnvState& start, int query_index, Rng&) override {
    const auto& cfg = bridge_.config();
    if (!bridge_.wait_connected(cfg.connect_timeout)) throw DemonstrationError("no human demonstrator connected");
    const auto t0 = std::chrono::steady_clock::now();
    last_attempts_ = 0;
    for (;;) {
      ++last_attempts_;
      Demonstration d = attempt(start, query_index);
      bridge_.send({{"type", "episode_end"},
                    {"cause", to_string(d.transitions.back().cause)},
                    {"attempt", last_attempts_},
                    {"query_index", query_index}});
      if (d.success) {
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        bridge_.send({{"type", "demo_accepted"},
                      {"query_index", query_index},
                      {"attempts", last_attempts_},
                      {"duration_ms", ms}});
        past_queries_.push_back(task_point(env_.spec(), start));
        json points = json::array();
        for (auto p : past_queries_) points.push_back(to_json_vec(p));
        bridge_.send({{"type", "trace"}, {"past_query_points", points}});
        return d;
      }
      failed_.push_back(std::move(d));
    }
  }

  DemoSource source() const override { return DemoSource::Human; }
  int last_attempts() const override { return last_attempts_; }
  bool measures_time() const override { return true; }
  const std::vector<Demonstration>& failed_attempts() const { return failed_; }

 private:
  Demonstration attempt(const EnvState& start, int query_index) {
    const auto& cfg = bridge_.config();
    bridge_.clear_inbox();
    env_.reset_to_state(start);
    bridge_.send({{"type", "query"},
                  {"start_state", to_json(start)},
                  {"task_id", to_string(env_.spec().task_id)},
                  {"query_index", query_index},
                  {"attempt", last_attempts_}});
    Demonstration d;
    d.start_state = start;
    d.source = DemoSource::Human;
    const bool lockstep = cfg.tick_hz <= 0.0;
    const auto tick = lockstep ? std::chrono::milliseconds(0)
                               : std::chrono::duration_cast<std::chrono::milliseconds>(
                                     std::chrono::duration<double>(1.0 / cfg.tick_hz));
    Action held{};
    double reward = 0.0;
    auto last_heard = std::chrono::steady_clock::now();
    while (!env_.done()) {
      const int step = env_.steps();
      bridge_.send({{"type", "frame"}, {"state", to_json(env_.observe())}, {"step", step}, {"reward", reward}});
      const auto deadline = std::chrono::steady_clock::now() + (lockstep ? cfg.idle_timeout : tick);
      bool got = false;
      for (;;) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) break;
        auto msg = bridge_.receive(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now) +
                                   std::chrono::milliseconds(1));
        if (!msg) continue;
        last_heard = std::chrono::steady_clock::now();
        if (msg->value("type", "") != "action") continue;
        held = parse_action(*msg);
        if (msg->value("step", step) == step) {
          got = true;
          if (lockstep) break;
        }
      }
      if (lockstep && !got) throw DemonstrationError("human demonstrator idle for too long");
      if (!lockstep && std::chrono::steady_clock::now() - last_heard > cfg.idle_timeout) {
        throw DemonstrationError("human demonstrator idle for too long");
      }
      if (!lockstep) {
        const auto now = std::chrono::steady_clock::now();
        if (now < deadline) std::this_thread::sleep_until(deadline);
      }
      const Transition t = env_.step(held);
      reward = t.r;
      d.transitions.push_back(t);
    }
    bridge_.send({{"type", "frame"}, {"state", to_json(env_.observe())}, {"step", env_.steps()}, {"reward", reward}});
    d.success = ends_in_goal(d.transitions);
    return d;
  }

  static Action parse_action(const json& m) {
    const double dx = m.value("dx", 0.0), dy = m.value("dy", 0.0);
    if (!std::isfinite(dx) || !std::isfinite(dy)) return {};
    return clip_action(Action{{dx, dy}});
  }

  Env env_;
  BridgeServer& bridge_;
  int last_attempts_ = 0;
  std::vector<Vec2> past_queries_;
  std::vector<Demonstration> failed_;
};

}  // namespace acl
