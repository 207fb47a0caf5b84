#include <chrono>
#include <deque>
#include <memory>
#include <string>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "imitate/error.hpp"
#include "imitate/session.hpp"

namespace imitate {

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

// Outbound frames beyond this are a slow client; it gets dropped.
constexpr std::size_t kMaxQueuedFrames = 256;

class Client : public std::enable_shared_from_this<Client> {
 public:
  using Closed = std::function<void(Client*)>;
  using Line = std::function<void(std::string_view)>;

  Client(tcp::socket socket, Line on_line, Closed on_closed)
      : ws_(std::move(socket)), on_line_(std::move(on_line)), on_closed_(std::move(on_closed)) {}

  void start(std::function<void()> on_open) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this(), on_open](beast::error_code ec) {
      if (ec) return self->shutdown();
      self->open_ = true;
      on_open();
      self->read();
    });
  }

  // Frames before the handshake completes are not queued.
  void send(std::string frame) {
    if (closed_ || !open_) return;
    if (queue_.size() >= kMaxQueuedFrames) return drop();
    queue_.push_back(std::move(frame));
    if (queue_.size() == 1) write();
  }

  // Flushes what is queued, then closes.
  void close_after_flush() {
    close_pending_ = true;
    if (queue_.empty()) drop();
  }

  void drop() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    ws_.async_close(websocket::close_code::normal,
                    [self = shared_from_this()](beast::error_code) { self->shutdown(); });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      std::size_t start = 0;
      while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        const auto end = nl == std::string::npos ? text.size() : nl;
        if (end > start && !self->closed_) self->on_line_(std::string_view(text).substr(start, end - start));
        if (nl == std::string::npos) break;
        start = nl + 1;
      }
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) return self->shutdown();
                      if (self->queue_.empty()) return;
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) return self->write();
                      if (self->close_pending_) self->drop();
                    });
  }

  void shutdown() {
    closed_ = true;
    if (on_closed_) std::exchange(on_closed_, nullptr)(this);
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  Line on_line_;
  Closed on_closed_;
  bool open_ = false;
  bool closed_ = false;
  bool close_pending_ = false;
};

class Server {
 public:
  Server(SessionCore& core, const SessionConfig& config, const ServeOptions& options)
      : core_(core), config_(config), acceptor_(ioc_), timer_(ioc_), signals_(ioc_, SIGINT, SIGTERM) {
    beast::error_code ec;
    const tcp::endpoint endpoint(net::ip::make_address(options.host, ec), options.port);
    if (ec) throw Error(ErrorCode::kEndpointUnavailable, "bad host " + options.host);
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
      throw Error(ErrorCode::kEndpointUnavailable,
                  options.host + ":" + std::to_string(options.port) + ": " + ec.message());
    }
    if (options.on_listening) options.on_listening(acceptor_.local_endpoint().port());
    signals_.async_wait([this](beast::error_code, int) { stop(); });
  }

  void run() {
    accept();
    schedule(std::chrono::steady_clock::now());
    ioc_.run();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto client = std::make_shared<Client>(
          std::move(socket), [this](std::string_view line) { core_.receive(line); },
          [this](Client* c) {
            if (c == client_.get()) {
              client_.reset();
              core_.client_disconnected();
            }
          });
      if (client_) {
        // Single client per session: refuse the newcomer.
        client->start([client] {
          client->send(nlohmann::json{{"type", "error"}, {"msg", "session already has a client"}}.dump() + "\n");
          client->close_after_flush();
        });
      } else {
        client_ = client;
        client->start([this] { core_.client_connected(); });
      }
      accept();
    });
  }

  void schedule(std::chrono::steady_clock::time_point when) {
    timer_.expires_at(when);
    timer_.async_wait([this, when](beast::error_code ec) {
      if (ec) return;
      on_tick();
      if (core_.finished()) return stop();
      const auto period = config_.tick_rate > 0
                              ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(1.0 / config_.tick_rate))
                              : std::chrono::steady_clock::duration::zero();
      // Training inside a tick pauses the clock instead of bunching ticks.
      schedule(std::max(when + period, std::chrono::steady_clock::now()));
    });
  }

  void on_tick() {
    for (const auto& msg : core_.tick()) {
      if (client_) client_->send(msg.dump() + "\n");
    }
    if (core_.take_disconnect_request() && client_) client_->close_after_flush();
  }

  void stop() {
    timer_.cancel();
    signals_.cancel();
    beast::error_code ec;
    acceptor_.close(ec);
    if (client_) client_->close_after_flush();
    // Give the close handshake a moment, then stop regardless.
    auto grace = std::make_shared<net::steady_timer>(ioc_, std::chrono::milliseconds(200));
    grace->async_wait([this, grace](beast::error_code) { ioc_.stop(); });
  }

  SessionCore& core_;
  SessionConfig config_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  net::steady_timer timer_;
  net::signal_set signals_;
  std::shared_ptr<Client> client_;
};

}  // namespace

void serve(SessionCore& core, const SessionConfig& config, const ServeOptions& options) {
  Server server(core, config, options);
  server.run();
}

}  // namespace imitate
