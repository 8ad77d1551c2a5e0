#include <thread>

#include "guide/error.hpp"
#include "guide/provider.hpp"
#include "guide/text.hpp"

namespace guide::provider {

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

TokenBucket::TokenBucket(double per_second, double burst, Sleeper sleeper)
    : rate_(per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()),
      sleeper_(std::move(sleeper)) {}

void TokenBucket::acquire() {
  if (rate_ <= 0) return;
  while (true) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard lock(mu_);
      auto now = std::chrono::steady_clock::now();
      double elapsed = std::chrono::duration<double>(now - last_).count();
      last_ = now;
      tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::milliseconds(static_cast<std::int64_t>((1.0 - tokens_) / rate_ * 1000.0) + 1);
    }
    sleeper_(wait);
  }
}

ModelGateway::ModelGateway(std::shared_ptr<ChatModel> backend, GatewayOptions options, cost::Ledger* ledger)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      ledger_(ledger),
      bucket_(options_.rate_per_second, options_.rate_burst, options_.sleeper),
      in_flight_(std::clamp(options_.max_in_flight, 1, 1024)) {
  if (options_.retry.attempts < 1) throw Error(ErrorKind::ConfigError, "retry attempts must be >= 1");
  if (options_.max_in_flight < 1) throw Error(ErrorKind::ConfigError, "max_in_flight must be >= 1");
}

ModelResponse ModelGateway::chat(const ModelRequest& req) {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  Usage total;
  auto record = [&](const char* status, int attempts) {
    if (!ledger_) return;
    cost::UsageRecord r;
    r.stage = req.stage.empty() ? "unlabeled" : req.stage;
    r.model_name = req.model_name;
    r.calls = 1;
    r.input_tokens = total.input_tokens;
    r.output_tokens = total.output_tokens;
    r.video_id = req.video_id;
    r.item = req.item;
    r.status = status;
    r.attempts = attempts;
    ledger_->append(std::move(r));
  };

  for (int attempt = 1;; ++attempt) {
    bucket_.acquire();
    ++attempts_;
    try {
      auto start = std::chrono::steady_clock::now();
      ModelResponse resp = backend_->chat(req);
      total.input_tokens += resp.usage.input_tokens;
      total.output_tokens += resp.usage.output_tokens;
      if (text::trim(resp.text).empty()) throw Error(ErrorKind::ModelFailure, "empty model output", true);
      if (resp.latency_ms == 0) {
        resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      }
      resp.usage = total;
      record("ok", attempt);
      return resp;
    } catch (const Error& e) {
      if (e.transient() && attempt < options_.retry.attempts) {
        options_.sleeper(std::chrono::milliseconds(options_.retry.base_backoff_ms << (attempt - 1)));
        continue;
      }
      record("failed", attempt);
      throw;
    } catch (const std::exception& e) {
      record("failed", attempt);
      throw Error(ErrorKind::ModelFailure, e.what());
    }
  }
}

}  // namespace guide::provider
