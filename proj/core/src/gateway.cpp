#include "cityprobe/gateway.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cityprobe/error.hpp"
#include "cityprobe/sha256.hpp"

namespace cityprobe {

namespace {

using nlohmann::json;

std::string iso8601_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json record_to_json(const QueryRecord& r) {
  return json{{"fingerprint", r.fingerprint}, {"prompt", r.prompt},
              {"raw_response", r.raw_response}, {"provider", r.provider},
              {"timestamp", r.timestamp},       {"repeat_index", r.repeat_index}};
}

QueryRecord record_from_json(const json& doc) {
  QueryRecord r;
  r.fingerprint = doc.at("fingerprint").get<std::string>();
  r.prompt = doc.at("prompt").get<std::string>();
  r.raw_response = doc.at("raw_response").get<std::string>();
  r.provider = doc.value("provider", std::string{});
  r.timestamp = doc.value("timestamp", std::string{});
  r.repeat_index = doc.value("repeat_index", 0);
  return r;
}

struct ParsedUrl {
  std::string scheme_host_port;  // what httplib::Client takes
  std::string path_prefix;       // e.g. "/v1"
};

ParsedUrl parse_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    fail(errc::invalid_argument, "base_url must include a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

std::string require_api_key(const ProviderConfig& cfg) {
  if (cfg.api_key_env.empty()) return "";
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    fail(errc::auth_missing, "environment variable " + cfg.api_key_env + " is not set");
  }
  return key;
}

std::string http_post_completion(const std::string& prompt_text, const ProviderConfig& cfg) {
  const std::string api_key = require_api_key(cfg);
  ParsedUrl url = parse_base_url(cfg.base_url);

  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_seconds));
  client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_seconds));
  client.set_write_timeout(std::chrono::duration<double>(cfg.timeout_seconds));

  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  const json body = {{"model", cfg.model_name},
                     {"messages", json::array({json{{"role", "user"}, {"content", prompt_text}}})},
                     {"temperature", cfg.temperature},
                     {"max_tokens", cfg.max_tokens}};
  const std::string payload = body.dump();
  const std::string path = url.path_prefix + "/chat/completions";

  int attempts = cfg.retries + 1;
  double backoff = cfg.backoff_base_seconds;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
          err == httplib::Error::Write) {
        fail(errc::timeout, cfg.base_url + ": " + httplib::to_string(err));
      }
      fail(errc::provider_error, cfg.base_url + ": " + httplib::to_string(err));
    }
    if (res->status == 429 || res->status >= 500) {
      if (attempt + 1 < attempts) {
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= 2;
        continue;
      }
      fail(errc::provider_error,
           "status " + std::to_string(res->status) + " after " + std::to_string(attempts) +
               " attempts: " + res->body);
    }
    if (res->status != 200) {
      fail(errc::provider_error, "status " + std::to_string(res->status) + ": " + res->body);
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
        !doc["choices"][0].contains("message")) {
      fail(errc::provider_error, "malformed completion body: " + res->body);
    }
    return doc["choices"][0]["message"].value("content", std::string{});
  }
  fail(errc::provider_error, "unreachable");
}

}  // namespace

QueryMode query_mode_from_flag(const std::string& flag) {
  if (flag == "live") return QueryMode::live;
  if (flag == "replay") return QueryMode::replay;
  if (flag == "record") return QueryMode::record;
  fail(errc::invalid_argument, "unknown mode '" + flag + "' (expected live|record|replay)");
}

std::string_view to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::live: return "live";
    case QueryMode::replay: return "replay";
    case QueryMode::record: return "record";
  }
  return "?";
}

std::string request_fingerprint(const std::string& model_name, double temperature,
                                const std::string& prompt_text, int repeat_index) {
  // \x1f separators; temperature uses JSON shortest round-trip formatting
  // so the digest is stable across platforms.
  std::string material = model_name;
  material += '\x1f';
  material += json(temperature).dump();
  material += '\x1f';
  material += prompt_text;
  material += '\x1f';
  material += std::to_string(repeat_index);
  return sha256_hex(material);
}

RecordStore::RecordStore(std::string path) : path_(std::move(path)) { load(); }

void RecordStore::load() {
  std::ifstream in(path_);
  if (!in) return;  // a store that does not exist yet is empty
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      fail(errc::format_error, path_ + ":" + std::to_string(lineno) + ": bad JSONL record");
    }
    QueryRecord r = record_from_json(doc);
    if (index_.contains(r.fingerprint)) continue;
    index_[r.fingerprint] = records_.size();
    records_.push_back(std::move(r));
  }
}

size_t RecordStore::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::optional<QueryRecord> RecordStore::find(const std::string& fingerprint) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(fingerprint);
  if (it == index_.end()) return std::nullopt;
  return records_[it->second];
}

bool RecordStore::append(const QueryRecord& record) {
  std::lock_guard lock(mutex_);
  if (index_.contains(record.fingerprint)) return false;
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) fail(errc::io_error, "cannot append to " + path_);
    out << record_to_json(record).dump() << '\n';
  }
  index_[record.fingerprint] = records_.size();
  records_.push_back(record);
  return true;
}

std::vector<QueryRecord> RecordStore::all() const {
  std::lock_guard lock(mutex_);
  return records_;
}

QueryRecord query(const RenderedPrompt& prompt, const ProviderConfig& cfg, RecordStore* store,
                  QueryMode mode, int repeat_index) {
  const std::string fp =
      request_fingerprint(cfg.model_name, cfg.temperature, prompt.text, repeat_index);

  if (mode == QueryMode::replay || mode == QueryMode::record) {
    if (store == nullptr) fail(errc::invalid_argument, "replay/record mode requires a store");
    if (auto hit = store->find(fp)) return *hit;
    if (mode == QueryMode::replay) fail(errc::replay_miss, fp);
  }

  QueryRecord record;
  record.fingerprint = fp;
  record.prompt = prompt.text;
  record.provider = cfg.model_name;
  record.repeat_index = repeat_index;
  record.raw_response = http_post_completion(prompt.text, cfg);
  record.timestamp = iso8601_now();

  if (mode == QueryMode::record) store->append(record);
  return record;
}

std::vector<QueryRecord> query_repeated(const RenderedPrompt& prompt, int n,
                                        const ProviderConfig& cfg, RecordStore* store,
                                        QueryMode mode) {
  if (n < 1) fail(errc::invalid_argument, "repeat count must be >= 1");

  std::vector<QueryRecord> results(static_cast<size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
  std::atomic<int> next{0};

  auto worker = [&] {
    for (;;) {
      int index = next.fetch_add(1);
      if (index >= n) return;
      try {
        results[static_cast<size_t>(index)] = query(prompt, cfg, store, mode, index);
      } catch (...) {
        errors[static_cast<size_t>(index)] = std::current_exception();
      }
    }
  };

  int workers = std::min(std::max(cfg.max_parallel, 1), n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int i = 0; i < n; ++i) {
    if (!errors[static_cast<size_t>(i)]) continue;
    // annotate with the repeat index, keeping the original error code
    try {
      std::rethrow_exception(errors[static_cast<size_t>(i)]);
    } catch (const Error& e) {
      throw Error(e.code(), "repeat " + std::to_string(i) + ": " + e.what());
    }
  }
  return results;
}

}  // namespace cityprobe
